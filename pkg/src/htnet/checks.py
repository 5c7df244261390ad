"""Finite-difference checks of every network layer and loss on small random instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .forge.scenario import Scenario
from .gradcheck import GradCheckResult, finite_difference_check
from .model.batch import make_batch
from .model.config import ModelConfig
from .model.decoder import TrajectoryDecoder
from .model.encoder import AgentEncoder, ConvPool, LaneConvBlock, SparseAttentionBlock
from .model.fusion import FeatureSelectionBlock, LaneAttention, toi_select
from .model.losses import (
    lane_bce_loss,
    maneuver_ce_loss,
    max_margin_loss,
    smooth_l1_loss,
    total_loss,
    trajectory_ce_loss,
)
from .model.network import HolisticTransformer
from .tensor import Tensor

D = 8  # feature width used by the layer checks


@dataclass
class LayerCheck:
    name: str
    results: list[tuple[str, GradCheckResult]] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(r.max_rel_error for _, r in self.results)

    def passed(self, tol: float = 1e-3) -> bool:
        return all(r.passed(tol) for _, r in self.results)

    def line(self, tol: float = 1e-3) -> str:
        detail = ", ".join(f"{t}={r.max_rel_error:.2e}" for t, r in self.results)
        return f"{self.name}: {'pass' if self.passed(tol) else 'FAIL'} ({detail})"


def _projector(rng, shape) -> Tensor:
    return Tensor(rng.normal(size=shape))


def _scalarize(out: Tensor, proj: Tensor) -> Tensor:
    return T.sum(out * proj)


def _chain_graph_edges(n: int, dilations=(1, 2)) -> dict:
    """Edge lists for a two-lane toy graph with a few of every relation."""
    half = n // 2
    edges = {}
    for k in dilations:
        pk = [(i + k, i) for i in range(half - k)] + [(i + k, i) for i in range(half, n - k)]
        edges[("pred", k)] = tuple(np.array(x, dtype=np.int64) for x in zip(*pk)) if pk else (np.zeros(0, np.int64),) * 2
        sk = [(j, i) for i, j in pk]
        edges[("succ", k)] = tuple(np.array(x, dtype=np.int64) for x in zip(*sk)) if sk else (np.zeros(0, np.int64),) * 2
    left = [(i, i + half) for i in range(half)]
    right = [(i + half, i) for i in range(half)]
    merge = [(0, half), (half, 0)]
    overlap = merge + [(1, half + 1), (half + 1, 1)]
    for name, rel in (("left", left), ("right", right), ("merge", merge), ("overlap", overlap)):
        edges[(name, 1)] = tuple(np.array(x, dtype=np.int64) for x in zip(*rel))
    return edges


def _sparse_attention(rng):
    block = SparseAttentionBlock(D, 2, 0.75, rng)
    x = Tensor(rng.normal(size=(3, 6, D)))
    proj = _projector(rng, (3, 6, D))
    return (lambda: _scalarize(block(x)[0], proj)), [("input", x), ("w_q", block.wq.weight), ("w_v", block.wv.weight)]


def _conv_pool(rng):
    unit = ConvPool(D, 3, rng)
    x = Tensor(rng.normal(size=(2, 7, D)))
    proj = _projector(rng, (2, 4, D))
    return (lambda: _scalarize(unit(x), proj)), [("input", x), ("weight", unit.weight)]


def _agent_encoder(rng):
    enc = AgentEncoder(D, 2, 0.75, 2, 3, 8, rng)
    x = Tensor(rng.normal(size=(2, 8, 6)))
    proj = _projector(rng, (2, D))
    return (lambda: _scalarize(enc(x)[0], proj)), [("input", x), ("embed", enc.embed.weight)]


def _lane_conv(rng):
    block = LaneConvBlock(D, (1, 2), rng)
    n = 8
    edges = _chain_graph_edges(n)
    x = Tensor(rng.normal(size=(n, D)))
    proj = _projector(rng, (n, D))
    return (lambda: _scalarize(block(x, edges), proj)), [
        ("input", x), ("w_p", block.conv.w_p.weight), ("w_o", block.conv.w_o.weight)
    ]


def _feature_selection(rng):
    block = FeatureSelectionBlock(D, D, rng)
    xb = Tensor(rng.normal(size=(4, D)))
    xc = Tensor(rng.normal(size=(5, D)))
    pairs = toi_select(rng.uniform(0, 10, (4, 2)), rng.uniform(0, 10, (5, 2)), 7.0)
    proj = _projector(rng, (4, D))
    return (lambda: _scalarize(block(xb, xc, pairs)[0], proj)), [
        ("base", xb), ("context", xc), ("w_c", block.w_c.weight), ("w_sigma", block.w_sigma.weight)
    ]


def _sigmoid_attention(rng):
    att = LaneAttention(D, rng)
    xa = Tensor(rng.normal(size=(3, D)))
    xl = Tensor(rng.normal(size=(6, D)))
    mask = np.ones((3, 6), bool)
    mask[2, :2] = False
    proj = _projector(rng, (3, D))
    proj_w = _projector(rng, (3, 6))

    def f():
        out, w = att(xa, xl, mask)
        return _scalarize(out, proj) + _scalarize(w, proj_w)

    return f, [("agents", xa), ("lanes", xl), ("w_k", att.wk.weight)]


def _decoder(rng):
    dec = TrajectoryDecoder(D, 3, 5, rng)
    x = Tensor(rng.normal(size=(2, D)))
    proj_s = _projector(rng, (2, 3, 5, 2))
    proj_p = _projector(rng, (2, 3))

    def f():
        steps, _, probs = dec(x)
        return _scalarize(steps, proj_s) + _scalarize(probs, proj_p)

    return f, [("input", x), ("score", dec.score.weight), ("head", dec.out[0].weight)]


def _probs(rng, n, k):
    logits = Tensor(rng.normal(size=(n, k)))
    return logits, lambda: T.softmax(logits, axis=-1)


def _loss_margin(rng):
    logits, probs = _probs(rng, 5, 4)
    kstar = np.argmax(logits.data, axis=-1)
    return (lambda: max_margin_loss(probs(), kstar, 0.2)), [("logits", logits)]


def _loss_traj_ce(rng):
    logits, probs = _probs(rng, 5, 4)
    kstar = np.argmax(logits.data, axis=-1)
    return (lambda: trajectory_ce_loss(probs(), kstar)), [("logits", logits)]


def _loss_smooth_l1(rng):
    target = rng.normal(size=(3, 6, 2))
    pos = Tensor(target[:, None] + rng.normal(0.0, 0.8, size=(3, 2, 6, 2)))
    # keep every error norm away from the corner at 1
    err = np.linalg.norm(pos.data - target[:, None], axis=-1)
    near = np.abs(err - 1.0) < 0.05
    pos.data[near] += 0.2
    kstar = np.array([0, 1, 0])
    return (lambda: smooth_l1_loss(pos, kstar, target)), [("positions", pos)]


def _loss_lane(rng):
    logits = Tensor(rng.normal(size=(3, 7)))
    labels = rng.random((3, 7)) < 0.4
    mask = np.ones((3, 7), bool)
    mask[0, 5:] = False
    return (lambda: lane_bce_loss(T.sigmoid(logits), labels, mask)), [("logits", logits)]


def _loss_maneuver(rng):
    logits, probs = _probs(rng, 5, 6)
    labels = rng.integers(0, 6, size=5)
    return (lambda: maneuver_ce_loss(probs(), labels)), [("logits", logits)]


def toy_scenario(seed: int = 0) -> Scenario:
    """Two-agent straight-road scene used by the end-to-end check."""
    from .forge.generator import ForgeConfig, generate_scenario

    cfg = ForgeConfig(t_hst=8, t_fut=6, late_prob=0.0)
    return generate_scenario("straight", 2, seed, cfg)


def _end_to_end(rng):
    cfg = ModelConfig(d_model=D, heads=2, n_sparse_blocks=2, n_lane_blocks=1, n_fusion_blocks=1, t_hst=8, t_fut=6,
                      modes=3)
    model = HolisticTransformer(cfg, int(rng.integers(1 << 30)))
    b = make_batch([toy_scenario(int(rng.integers(1000)))], cfg.dilations)

    def f():
        out = model(b)
        return total_loss(out, b.futures, b.lane_labels, b.same_scene, b.maneuvers, cfg.margin)[0]

    return f, [("agent_embed", model.agent_encoder.embed.weight), ("lane_embed", model.lane_encoder.embed.weight),
               ("decoder_score", model.decoder.score.weight), ("lane_att_q", model.lane_attention.wq.weight)]


LAYER_CHECKS: dict[str, Callable] = {
    "sparse_attention": _sparse_attention,
    "conv_pool": _conv_pool,
    "agent_encoder": _agent_encoder,
    "lane_conv": _lane_conv,
    "feature_selection": _feature_selection,
    "sigmoid_attention": _sigmoid_attention,
    "decoder": _decoder,
    "loss_max_margin": _loss_margin,
    "loss_traj_ce": _loss_traj_ce,
    "loss_smooth_l1": _loss_smooth_l1,
    "loss_lane_bce": _loss_lane,
    "loss_maneuver_ce": _loss_maneuver,
    "end_to_end": _end_to_end,
}


def check_layer(name: str, seed: int = 0, n_coords: int = 100, step: float = 1e-5) -> LayerCheck:
    rng = np.random.default_rng(seed)
    f, targets = LAYER_CHECKS[name](rng)
    out = LayerCheck(name)
    for label, x in targets:
        out.results.append((label, finite_difference_check(f, x, step, n_coords, np.random.default_rng(seed + 1))))
    return out


def run_grad_checks(seed: int = 0, n_coords: int = 100, names=None) -> list[LayerCheck]:
    return [check_layer(n, seed, n_coords) for n in (names or LAYER_CHECKS)]
