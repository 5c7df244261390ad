"""Noise-robustness sweep, ablation table and lane-attention export."""

from __future__ import annotations

import csv
import html
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .forge.noise import NoiseSpec, inject_noise
from .forge.scenario import Scenario
from .model.config import ABLATIONS
from .model.metrics import format_value
from .model.network import HolisticTransformer
from .train import TrainConfig, evaluate, predict, train

NOISE_LEVELS = (0.0, 0.01, 0.03, 0.05, 0.08)


@dataclass
class SweepCell:
    model: str
    probability: float
    ade1: list[float]
    fde1: list[float]
    adek: list[float]
    fdek: list[float]

    def stats(self) -> dict[str, float]:
        out = {}
        for key in ("ade1", "fde1", "adek", "fdek"):
            v = np.asarray(getattr(self, key))
            out[f"{key}_mean"] = float(v.mean())
            out[f"{key}_var"] = float(v.var())
        return out


def noise_trial_seed(seed: int, trial: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, trial, index]).generate_state(1)[0])


def noise_sweep(
    models: dict[str, HolisticTransformer],
    scenarios: list[Scenario],
    probabilities=NOISE_LEVELS,
    mode: str = "gaussian",
    trials: int = 5,
    seed: int = 0,
    batch_size: int = 8,
) -> list[SweepCell]:
    """Evaluate every model on noisy copies of the same scenarios.

    Trial ``t`` uses the same noise draws for every model, so model
    differences are not confounded with noise differences.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cells = []
    for name, model in models.items():
        for p in probabilities:
            spec = NoiseSpec(mode, p)
            cell = SweepCell(name, float(p), [], [], [], [])
            for t in range(trials):
                noisy = [inject_noise(sc, spec, noise_trial_seed(seed, t, i)) for i, sc in enumerate(scenarios)]
                r = evaluate(model, noisy, batch_size).report
                cell.ade1.append(r.min_ade_1)
                cell.fde1.append(r.min_fde_1)
                cell.adek.append(r.min_ade_k)
                cell.fdek.append(r.min_fde_k)
            cells.append(cell)
    return cells


def sweep_rows(cells: list[SweepCell]) -> list[dict]:
    """One row per (model, probability) with minFDE increment and increment ratio against p = 0."""
    base = {c.model: c.stats() for c in cells if c.probability == 0.0}
    rows = []
    for c in cells:
        s = c.stats()
        row = {"model": c.model, "probability": c.probability, **s}
        if c.model in base:
            b = base[c.model]
            for key in ("fde1", "fdek"):
                inc = s[f"{key}_mean"] - b[f"{key}_mean"]
                row[f"{key}_increment"] = inc
                row[f"{key}_increment_ratio"] = inc / b[f"{key}_mean"] if b[f"{key}_mean"] else float("nan")
        rows.append(row)
    return rows


def monotonicity(cells: list[SweepCell], model: str, key: str = "fdek") -> float:
    """Spearman correlation between noise probability and the mean metric."""
    mine = sorted((c for c in cells if c.model == model), key=lambda c: c.probability)
    p = [c.probability for c in mine]
    m = [float(np.mean(getattr(c, key))) for c in mine]
    return float(spearmanr(p, m)[0])


def write_rows(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v if isinstance(v, str) else format_value(v)) for k, v in r.items()})
    return path


def ablate(
    train_set: list[Scenario],
    eval_set: list[Scenario],
    cfg: TrainConfig,
    variants=ABLATIONS,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Train and evaluate each architecture switch with the same data, seed and budget."""
    rows = []
    for name in variants:
        vcfg = replace(cfg, model=replace(cfg.model, ablation=name))
        sub = None if out_dir is None else Path(out_dir) / name
        res = train(train_set, vcfg, sub)
        r = evaluate(res.model, eval_set).report
        K = vcfg.model.modes
        rows.append({
            "variant": name,
            "minADE_K1": r.min_ade_1,
            "minFDE_K1": r.min_fde_1,
            f"minADE_K{K}": r.min_ade_k,
            f"minFDE_K{K}": r.min_fde_k,
            "parameters": res.model.num_parameters(),
        })
    return rows


# ---------------------------------------------------------------------------
# lane attention export


def ramp(t: float) -> str:
    """Blue at 0, red at 1."""
    t = float(np.clip(t, 0.0, 1.0))
    return f"#{int(round(255 * t)):02x}00{int(round(255 * (1 - t))):02x}"


def export_attention(model: HolisticTransformer, scenario: Scenario, out_dir: str | Path, agent: int = 0) -> tuple[Path, Path]:
    """Write every (agent, lane vector, weight) triple to CSV and an SVG overlay for one agent.

    Lane vectors are colored from blue (lowest weight for that agent) to red
    (highest); the agent's history, ground-truth future and most probable
    predicted trajectory are drawn on top.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    positions, probs, _, weights = next(predict(model, [scenario], 1))
    g = scenario.graph
    csv_path = out / "lane_attention.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "lane_vector", "lane_id", "weight", "x", "y"])
        for a in range(scenario.n_agents):
            for j, v in enumerate(g.vectors):
                w.writerow([a, j, v.lane_id, repr(float(weights[a, j])), repr(v.anchor[0]), repr(v.anchor[1])])

    starts, ends = g.segments()
    pts = [starts, ends] + [np.stack([t.anchor for t in scenario.agents])]
    allp = np.concatenate([p.reshape(-1, 2) for p in pts] + [positions.reshape(-1, 2)])
    lo, hi = allp.min(axis=0) - 5.0, allp.max(axis=0) + 5.0
    size = 800.0
    scale = size / max(hi - lo)

    def xy(p):
        return (p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale

    row = weights[agent] if scenario.n_agents else np.zeros(g.n)
    wmin, wmax = (float(row.min()), float(row.max())) if len(row) else (0.0, 1.0)
    span = wmax - wmin if wmax > wmin else 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{(hi[1] - lo[1]) * scale:.0f}">',
             '<rect width="100%" height="100%" fill="white"/>']
    for j in range(g.n):
        (x1, y1), (x2, y2) = xy(starts[j]), xy(ends[j])
        color = ramp((row[j] - wmin) / span)
        parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{color}" '
                     f'stroke-width="4"><title>{html.escape(g.vectors[j].lane_id)} {row[j]:.3f}</title></line>')
    for i, tr in enumerate(scenario.agents):
        hist = tr.anchor - np.cumsum(tr.history[::-1, :2], axis=0)[::-1]
        track = np.vstack([hist, tr.anchor[None]])
        parts.append(_polyline([xy(p) for p in track], "#555555", 1.5))
        if tr.future is not None:
            parts.append(_polyline([xy(p) for p in np.vstack([tr.anchor[None], tr.future])], "#2a9d2a", 1.5, "4 3"))
        k = int(np.argmax(probs[i]))
        parts.append(_polyline([xy(p) for p in np.vstack([tr.anchor[None], positions[i, k]])], "#000000", 1.5))
        cx, cy = xy(tr.anchor)
        fill = "#ffbf00" if i == agent else "#888888"
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="{fill}"><title>agent {i}</title></circle>')
    parts.append("</svg>")
    svg_path = out / f"lane_attention_agent{agent}.svg"
    svg_path.write_text("\n".join(parts))
    return csv_path, svg_path


def _polyline(points, color: str, width: float, dash: str | None = None) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'
