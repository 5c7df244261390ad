"""Perception corruption of agent histories: frame loss and Gaussian jitter."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario

NOISE_MODES = ("loss", "gaussian")


@dataclass(frozen=True)
class NoiseSpec:
    """``mode`` is ``loss`` (frames dropped) or ``gaussian`` (std = speed / 100)."""

    mode: str
    probability: float
    dt: float = 0.1

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"noise probability must be in [0, 1], got {self.probability}")


def inject_noise(scenario: Scenario, spec: NoiseSpec, seed: int) -> Scenario:
    """Corrupted copy of ``scenario``; futures and labels are left as they are.

    Frames that were never perceived stay at zero in both modes, so the
    zero-displacement convention for unperceived steps keeps holding.
    """
    out = copy.deepcopy(scenario)
    if spec.probability == 0.0:
        return out
    rng = np.random.default_rng(seed)
    for agent in out.agents:
        hist = agent.history
        hit = rng.random(len(hist)) < spec.probability
        if spec.mode == "loss":
            hist[hit] = 0.0
        else:
            sigma = agent.speed(spec.dt) / 100.0
            noise = rng.normal(0.0, 1.0, size=(len(hist), 2)) * sigma
            mask = hit & (hist[:, 2] > 0)
            hist[mask, :2] += noise[mask]
    return out
