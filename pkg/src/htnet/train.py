"""Adam, the training loop and batched evaluation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .checkpoint import save_parameters
from .forge.scenario import Scenario
from .model.batch import make_batch
from .model.config import ModelConfig
from .model.losses import LossBreakdown, LossWeights, total_loss
from .model.metrics import MetricsReport, compute_metrics
from .model.network import HolisticTransformer
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "margin", "traj_ce", "smooth_l1", "lane_ce", "agent_ce", "total", "skipped")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    skipped: int = 0

    @classmethod
    def like(cls, params: list[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> bool:
    """One bias-corrected Adam update in place; returns False (and counts) if any gradient is non-finite."""
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("optimizer state does not match the parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        return False
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return True


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    steps: int = 2000
    seed: int = 0
    model: ModelConfig = ModelConfig()
    loss_weights: LossWeights = LossWeights()

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("lr, batch_size and steps must be positive")


@dataclass
class TrainResult:
    model: HolisticTransformer
    history: list[dict] = field(default_factory=list)
    skipped: int = 0
    diverged: bool = False
    checkpoint: Path | None = None


def batch_loss(model: HolisticTransformer, scenarios: list[Scenario], weights: LossWeights = LossWeights()):
    b = make_batch(scenarios, model.cfg.dilations)
    if b.futures is None:
        raise ValueError("training scenarios need ground-truth futures")
    out = model(b)
    return total_loss(out, b.futures, b.lane_labels, b.same_scene, b.maneuvers, model.cfg.margin, weights)


def train(
    scenarios: list[Scenario],
    cfg: TrainConfig = TrainConfig(),
    out_dir: str | Path | None = None,
    model: HolisticTransformer | None = None,
    callback: Callable[[int, HolisticTransformer], bool] | None = None,
) -> TrainResult:
    """Minimize the summed loss over shuffled mini-batches; deterministic given ``cfg.seed``.

    With ``out_dir`` the per-step log goes to ``train_log.csv`` and the final
    parameters to ``model.npz``. A non-finite loss stops training and the
    last good parameters are what gets saved. ``callback(step, model)`` runs
    after every update; returning True ends training early.
    """
    if not scenarios:
        raise ValueError("empty training set")
    model = model or HolisticTransformer(cfg.model, cfg.seed)
    params = model.parameters()
    state = AdamState.like(params)
    rng = np.random.default_rng(cfg.seed + 1)
    result = TrainResult(model)
    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "train_log.csv", "w", newline="")
        writer = csv.DictWriter(fh, LOG_FIELDS)
        writer.writeheader()
    order: list[int] = []
    try:
        for step in range(cfg.steps):
            if len(order) < cfg.batch_size:
                order += list(rng.permutation(len(scenarios)))
            idx, order = order[: cfg.batch_size], order[cfg.batch_size :]
            model.zero_grad()
            with T.Tape() as tape:
                loss, parts = batch_loss(model, [scenarios[i] for i in idx], cfg.loss_weights)
            if not math.isfinite(parts.total):
                log.error("non-finite loss at step %d; stopping", step)
                result.diverged = True
                break
            T.backpropagate(tape, loss, params)
            adam_step(params, [p.grad for p in params], state, cfg.lr)
            row = {"step": step, **parts.as_dict(), "skipped": state.skipped}
            result.history.append(row)
            if writer is not None:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
            if callback is not None and callback(step, model):
                break
    finally:
        if fh is not None:
            fh.close()
    result.skipped = state.skipped
    if out is not None:
        meta = {"model": _config_dict(cfg.model), "seed": cfg.seed, "steps": len(result.history),
                "diverged": result.diverged}
        result.checkpoint = save_parameters(out / "model.npz", model, meta)
    return result


def _config_dict(cfg: ModelConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["dilations"] = list(cfg.dilations)
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    if "dilations" in d:
        d["dilations"] = tuple(d["dilations"])
    return ModelConfig(**d)


@dataclass
class Evaluation:
    report: MetricsReport
    positions: np.ndarray
    probs: np.ndarray
    lane_weights: list[np.ndarray]
    maneuver: np.ndarray | None
    loss: LossBreakdown | None = None


def predict(model: HolisticTransformer, scenarios: list[Scenario], batch_size: int = 8):
    """Run the model without a tape; yields (scenario slice outputs) per scenario in order."""
    for s in range(0, len(scenarios), batch_size):
        chunk = scenarios[s : s + batch_size]
        b = make_batch(chunk, model.cfg.dilations)
        out = model(b)
        for sa, sl in zip(b.agent_slices, b.lane_slices):
            yield (
                out.positions.data[sa],
                out.probs.data[sa],
                None if out.maneuver is None else out.maneuver.data[sa],
                out.lane_weights.data[sa, sl],
            )


def evaluate(
    model: HolisticTransformer, scenarios: list[Scenario], batch_size: int = 8, threshold: float = 0.5
) -> Evaluation:
    pos, prob, mane, lanes, futures, labels, lane_labels = [], [], [], [], [], [], []
    from .forge.labels import MANEUVERS

    for sc, (p, pr, m, lw) in zip(scenarios, predict(model, scenarios, batch_size)):
        pos.append(p)
        prob.append(pr)
        if m is not None:
            mane.append(m)
        lanes.extend(list(lw))
        lane_labels.extend(list(sc.lane_labels))
        futures.extend(a.future for a in sc.agents)
        labels.extend(MANEUVERS.index(x) for x in sc.maneuver_labels)
    positions, probs = np.concatenate(pos), np.concatenate(prob)
    maneuver = np.concatenate(mane) if mane else None
    report = compute_metrics(
        positions, probs, futures, maneuver, np.array(labels), lanes, lane_labels, threshold
    )
    return Evaluation(report, positions, probs, lanes, maneuver)


def load_model(path: str | Path) -> HolisticTransformer:
    """Rebuild a model from a checkpoint written by :func:`train`."""
    from .checkpoint import load_parameters, read_meta

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    meta = read_meta(path)
    if not meta or "model" not in meta:
        raise ValueError(f"{path}: checkpoint has no model configuration")
    model = HolisticTransformer(model_config_from_dict(meta["model"]), int(meta.get("seed", 0)))
    load_parameters(path, model)
    return model
