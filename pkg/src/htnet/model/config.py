"""Architecture hyperparameters and ablation switches."""

from __future__ import annotations

import math
from dataclasses import dataclass

ABLATIONS = (
    "full",
    "no_feature_selection",
    "full_feature_selection",
    "vanilla_attention",
    "no_decision",
    "no_lane_att",
    "no_agent_att",
)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    heads: int = 4
    sparsity: float = 0.75  # fraction of queries kept by M-score
    n_sparse_blocks: int = 3
    n_lane_blocks: int = 4
    n_fusion_blocks: int = 2
    dilations: tuple[int, ...] = (1, 2)
    conv_kernel: int = 3
    t_hst: int = 20
    t_fut: int = 30
    modes: int = 6
    lane_radius: float = 10.0  # agent <-> lane region of interest
    agent_radius: float = 30.0  # agent <-> agent region of interest
    margin: float = 0.2
    ablation: str = "full"

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by heads {self.heads}")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError(f"sparsity must be in (0, 1], got {self.sparsity}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd")
        if any(not 1 <= k <= 6 for k in self.dilations):
            raise ValueError(f"dilations must lie in [1, 6], got {self.dilations}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @property
    def effective_sparsity(self) -> float:
        return 1.0 if self.ablation == "vanilla_attention" else self.sparsity

    @property
    def radii(self) -> tuple[float, float]:
        if self.ablation == "full_feature_selection":
            return math.inf, math.inf
        return self.lane_radius, self.agent_radius

    @property
    def uses_fusion(self) -> bool:
        return self.ablation != "no_feature_selection"

    @property
    def lane_decision(self) -> bool:
        return self.ablation not in ("no_lane_att", "no_decision")

    @property
    def agent_decision(self) -> bool:
        return self.ablation not in ("no_agent_att", "no_decision")
