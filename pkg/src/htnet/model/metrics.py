"""Displacement errors, maneuver classification scores and lane-decision scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..forge.labels import MANEUVERS, YIELD_CLASSES


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    min_ade_1: float
    min_fde_1: float
    min_ade_k: float
    min_fde_k: float
    modes: int
    n_agents: int
    n_excluded: int
    maneuver_accuracy: float | None = None
    per_class: dict[str, PRF] = field(default_factory=dict)
    yield_decision: PRF | None = None
    lane_accuracy: float | None = None
    lane_case_recall: float | None = None

    def as_dict(self) -> dict[str, float | int | None]:
        out: dict[str, float | int | None] = {
            "minADE_K1": self.min_ade_1,
            "minFDE_K1": self.min_fde_1,
            f"minADE_K{self.modes}": self.min_ade_k,
            f"minFDE_K{self.modes}": self.min_fde_k,
            "n_agents": self.n_agents,
            "n_excluded": self.n_excluded,
            "maneuver_accuracy": self.maneuver_accuracy,
            "lane_accuracy": self.lane_accuracy,
            "lane_case_recall": self.lane_case_recall,
        }
        for name, prf in list(self.per_class.items()) + [("yield", self.yield_decision)]:
            if prf is None:
                continue
            out[f"{name}_precision"] = prf.precision
            out[f"{name}_recall"] = prf.recall
            out[f"{name}_f1"] = prf.f1
        return out

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.as_dict().items():
                w.writerow([k, "" if v is None else format_value(v)])
        return path


def format_value(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _prf(pred: np.ndarray, true: np.ndarray) -> PRF:
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f1, int(true.sum()))


def displacement_errors(positions: np.ndarray, probs: np.ndarray, futures: np.ndarray) -> tuple[float, float, float, float]:
    """(minADE_1, minFDE_1, minADE_K, minFDE_K) averaged over agents.

    K=1 uses the most probable mode; the K variants minimize over all modes.
    """
    err = np.linalg.norm(positions - futures[:, None], axis=-1)  # N, K, t
    ade, fde = err.mean(axis=-1), err[..., -1]
    best = np.argmax(probs, axis=-1)
    rows = np.arange(len(best))
    return (
        float(ade[rows, best].mean()),
        float(fde[rows, best].mean()),
        float(ade.min(axis=-1).mean()),
        float(fde.min(axis=-1).mean()),
    )


def compute_metrics(
    positions: np.ndarray,
    probs: np.ndarray,
    futures: list[np.ndarray | None],
    maneuver_probs: np.ndarray | None = None,
    maneuver_labels: np.ndarray | None = None,
    lane_weights: list[np.ndarray] | None = None,
    lane_labels: list[np.ndarray] | None = None,
    threshold: float = 0.5,
) -> MetricsReport:
    """Metrics over a pool of agents.

    ``positions`` is (N, K, t_fut, 2) in the same frame as ``futures``; agents
    whose future is ``None`` are excluded from every metric and counted.
    Lane rows are per agent because scenarios differ in lane count.
    """
    positions = np.asarray(positions)
    keep = np.array([f is not None for f in futures], dtype=bool)
    n_ex = int((~keep).sum())
    K = positions.shape[1]
    if keep.any():
        fut = np.stack([f for f in futures if f is not None])
        a1, f1, ak, fk = displacement_errors(positions[keep], np.asarray(probs)[keep], fut)
    else:
        a1 = f1 = ak = fk = float("nan")
    report = MetricsReport(a1, f1, ak, fk, K, int(keep.sum()), n_ex)

    if maneuver_probs is not None and maneuver_labels is not None and keep.any():
        pred = np.argmax(np.asarray(maneuver_probs)[keep], axis=-1)
        true = np.asarray(maneuver_labels)[keep]
        report.maneuver_accuracy = float(np.mean(pred == true))
        report.per_class = {c: _prf(pred == i, true == i) for i, c in enumerate(MANEUVERS)}
        yi = [MANEUVERS.index(c) for c in YIELD_CLASSES]
        report.yield_decision = _prf(np.isin(pred, yi), np.isin(true, yi))

    if lane_weights is not None and lane_labels is not None:
        idx = np.nonzero(keep)[0]
        w = [np.asarray(lane_weights[i]) >= threshold for i in idx]
        y = [np.asarray(lane_labels[i], dtype=bool) for i in idx]
        cells = sum(len(r) for r in y)
        if cells:
            report.lane_accuracy = float(sum(int(np.sum(a == b)) for a, b in zip(w, y)) / cells)
        with_pos = [(a, b) for a, b in zip(w, y) if b.any()]
        if with_pos:
            report.lane_case_recall = float(np.mean([bool(np.any(a & b)) for a, b in with_pos]))
    return report
