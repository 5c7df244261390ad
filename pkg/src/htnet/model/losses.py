"""Training objective: mode ranking, trajectory regression and the two decision terms."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..tensor import ShapeError, Tensor

EPS = 1e-12


def _gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """x[n, index[n], ...] for every n, keeping the trailing axes."""
    N, K = x.shape[:2]
    rest = x.shape[2:]
    flat = x.reshape((N * K,) + rest)
    return T.index_select(flat, np.arange(N) * K + np.asarray(index))


def max_margin_loss(probs: Tensor, kstar: np.ndarray, margin: float = 0.2) -> Tensor:
    """Mean over agents and non-best modes of max(0, p_k - p_k* + margin)."""
    N, K = probs.shape
    if K == 1:
        return Tensor(np.zeros(()))
    best = _gather_rows(probs, kstar).reshape(N, 1)
    hinge = T.relu(probs - best + margin)
    others = np.ones((N, K))
    others[np.arange(N), kstar] = 0.0
    return T.sum(hinge * Tensor(others)) / float(N * (K - 1))


def trajectory_ce_loss(probs: Tensor, kstar: np.ndarray) -> Tensor:
    """Cross-entropy against the one-hot pseudo label at the best mode."""
    N = probs.shape[0]
    p = T.clip(_gather_rows(probs, kstar), EPS, 1.0)
    return -(T.sum(T.log(p)) / float(N))


def smooth_l1_loss(positions: Tensor, kstar: np.ndarray, target: np.ndarray) -> Tensor:
    """Smooth-L1 on the per-step Euclidean error of the best mode, averaged over agents and steps."""
    N, _, t, _ = positions.shape
    if target.shape != (N, t, 2):
        raise ShapeError("smooth_l1_loss", f"target shape {target.shape} != {(N, t, 2)}")
    err = _gather_rows(positions, kstar) - Tensor(target)
    return T.sum(T.smooth_l1(err)) / float(N * t)


def lane_bce_loss(weights: Tensor, labels: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Binary cross-entropy over (agent, lane) cells; ``mask`` selects cells that exist."""
    if weights.shape != labels.shape:
        raise ShapeError("lane_bce_loss", f"weights {weights.shape} and labels {labels.shape} differ")
    mask = np.ones(labels.shape, bool) if mask is None else np.asarray(mask, bool)
    n = int(mask.sum())
    if n == 0:
        return Tensor(np.zeros(()))
    y = labels.astype(np.float64) * mask
    w = T.clip(weights, EPS, 1.0 - EPS)
    ll = T.log(w) * Tensor(y) + T.log(1.0 - w) * Tensor((1.0 - y) * mask)
    return -(T.sum(ll) / float(n))


def maneuver_ce_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Six-class cross-entropy averaged over agents."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeError("maneuver_ce_loss", f"probabilities {probs.shape} and labels {labels.shape} do not conform")
    p = T.clip(_gather_rows(probs, labels), EPS, 1.0)
    return -(T.sum(T.log(p)) / float(probs.shape[0]))


@dataclass
class LossBreakdown:
    margin: float
    traj_ce: float
    smooth_l1: float
    lane_ce: float
    agent_ce: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LossWeights:
    margin: float = 1.0
    traj_ce: float = 1.0
    smooth_l1: float = 1.0
    lane_ce: float = 1.0
    agent_ce: float = 1.0


def total_loss(
    out,
    futures: np.ndarray,
    lane_labels: np.ndarray,
    lane_mask: np.ndarray,
    maneuvers: np.ndarray,
    margin: float = 0.2,
    weights: LossWeights = LossWeights(),
) -> tuple[Tensor, LossBreakdown]:
    """Sum of the five terms; decision terms drop out when the model has no such head."""
    kstar = out.kstar
    terms = {
        "margin": max_margin_loss(out.probs, kstar, margin),
        "traj_ce": trajectory_ce_loss(out.probs, kstar),
        "smooth_l1": smooth_l1_loss(out.positions, kstar, futures),
    }
    zero = Tensor(np.zeros(()))
    terms["lane_ce"] = lane_bce_loss(out.lane_weights, lane_labels, lane_mask) if out.lane_loss else zero
    terms["agent_ce"] = maneuver_ce_loss(out.maneuver, maneuvers) if out.maneuver is not None else zero
    total = None
    for name, term in terms.items():
        w = getattr(weights, name)
        part = term if w == 1.0 else term * w
        total = part if total is None else total + part
    parts = {k: float(v.data) for k, v in terms.items()}
    return total, LossBreakdown(total=float(total.data), **parts)
