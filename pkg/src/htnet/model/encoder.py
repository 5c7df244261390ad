"""Agent history encoder (sparse attention + convolution-pooling) and lane graph encoder."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..nn import FeedForward, LayerNorm, Linear, Module, kaiming_uniform
from ..scene.frame import AGENT_FEATURES
from ..scene.graph import LANE_FEATURES
from ..tensor import ShapeError, Tensor


def positional_encoding(pos: int, d_model: int, t_hst: int) -> np.ndarray:
    """Sinusoidal code: sin at even entries, cos at odd, base 2*t_hst."""
    if pos < 0:
        raise ValueError(f"position must be non-negative, got {pos}")
    i = np.arange(0, d_model, 2)
    angle = pos / (2.0 * t_hst) ** (i / d_model)
    out = np.empty(d_model)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle[: d_model // 2])
    return out


def positional_table(length: int, d_model: int, t_hst: int) -> np.ndarray:
    return np.stack([positional_encoding(p, d_model, t_hst) for p in range(length)])


def m_score(q: np.ndarray, K: np.ndarray) -> float:
    """Max minus mean of the scaled dot products of one query with every key."""
    s = K @ q / math.sqrt(q.shape[-1])
    return float(s.max() - s.mean())


def kl_to_uniform(q: np.ndarray, K: np.ndarray) -> float:
    """Exact KL(uniform || softmax(q K^T / sqrt(d))) via a stable log-sum-exp."""
    s = K @ q / math.sqrt(q.shape[-1])
    top = s.max()
    return float(top + math.log(np.exp(s - top).sum()) - s.mean() - math.log(len(s)))


def n_selected(length: int, ratio: float) -> int:
    # guard against 0.75 * 20 = 15.000000000000002 style round-up
    n = math.ceil(ratio * length - 1e-9)
    if n < 1:
        raise ValueError(f"sparsity {ratio} keeps no query of a length-{length} sequence")
    return min(n, length)


@dataclass
class AttentionTrace:
    scores: np.ndarray  # (N, h, L, L) scaled dot products
    m_scores: np.ndarray  # (N, h, L)
    selected: np.ndarray  # (N, h, u) ascending query indices
    weights: np.ndarray  # (N, h, u, L) softmax rows of the selected queries

    def to_csv(self, path: str | Path, item: int = 0) -> Path:
        """One row per (head, query): M-score, selected flag and key weights when selected."""
        path = Path(path)
        _, h, L, _ = self.scores.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["head", "query", "m_score", "selected"] + [f"w{j}" for j in range(L)])
            for head in range(h):
                sel = list(self.selected[item, head])
                for qi in range(L):
                    if qi in sel:
                        row = [f"{x:.10g}" for x in self.weights[item, head, sel.index(qi)]]
                    else:
                        row = [""] * L
                    w.writerow([head, qi, f"{self.m_scores[item, head, qi]:.10g}", int(qi in sel)] + row)
        return path


class SparseAttentionBlock(Module):
    """Multi-head self-attention over the top-M-score queries, then residual norm and feedforward.

    Rows whose query is not selected get no attention output; they reach the
    normalization through the residual only. Head outputs are concatenated.
    """

    def __init__(self, d_model: int, heads: int, ratio: float, rng: np.random.Generator):
        self.heads = heads
        self.ratio = ratio
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.norm = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        N, L, d = x.shape
        return T.transpose(x.reshape(N, L, self.heads, d // self.heads), (0, 2, 1, 3))

    def attend(self, x: Tensor) -> tuple[Tensor, AttentionTrace]:
        if x.ndim != 3:
            raise ShapeError("sparse_attention", f"expected (N, L, d_model), got {x.shape}")
        N, L, d = x.shape
        h, dh = self.heads, d // self.heads
        u = n_selected(L, self.ratio)
        q, k, v = self._split(self.wq(x)), self._split(self.wk(x)), self._split(self.wv(x))
        scale = 1.0 / math.sqrt(dh)
        scores = (q.data @ np.swapaxes(k.data, -1, -2)) * scale
        m = scores.max(axis=-1) - scores.mean(axis=-1)
        order = np.argsort(-m, axis=-1, kind="stable")[..., :u]
        sel = np.sort(order, axis=-1)
        flat = (np.arange(N * h)[:, None] * L + sel.reshape(N * h, u)).reshape(-1)
        qs = T.index_select(q.reshape(N * h * L, dh), flat).reshape(N * h, u, dh)
        kf, vf = k.reshape(N * h, L, dh), v.reshape(N * h, L, dh)
        w = T.softmax((qs @ kf.T) * scale, axis=-1)
        rows = (w @ vf).reshape(N * h * u, dh)
        out = T.index_add(Tensor(np.zeros((N * h * L, dh))), flat, rows)
        out = T.transpose(out.reshape(N, h, L, dh), (0, 2, 1, 3)).reshape(N, L, d)
        trace = AttentionTrace(scores, m, sel, w.data.reshape(N, h, u, L))
        return out, trace

    def __call__(self, x: Tensor) -> tuple[Tensor, AttentionTrace]:
        a, trace = self.attend(x)
        xs = self.norm(x + a)
        return self.ffn(xs, x), trace


class ConvPool(Module):
    """Temporal convolution (same padding) followed by width-2 max-pooling; no shortcut."""

    def __init__(self, d_model: int, kernel: int, rng: np.random.Generator):
        self.weight = Tensor(kaiming_uniform(rng, kernel * d_model, (kernel, d_model, d_model)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_model), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] < 2:
            raise ShapeError("conv_pool", f"sequence length must be >= 2, got {x.shape[1]}")
        return T.max_pool1d(T.conv1d(x, self.weight, self.bias), 2, 2)


class AgentEncoder(Module):
    """Linear input map plus positional code, N_x (sparse attention, conv-pool) blocks, temporal max."""

    def __init__(self, d_model: int, heads: int, ratio: float, n_blocks: int, kernel: int, t_hst: int,
                 rng: np.random.Generator):
        self.embed = Linear(AGENT_FEATURES, d_model, rng)
        self.attention = [SparseAttentionBlock(d_model, heads, ratio, rng) for _ in range(n_blocks)]
        self.pool = [ConvPool(d_model, kernel, rng) for _ in range(n_blocks)]
        self._pe = positional_table(t_hst, d_model, t_hst)

    def __call__(self, feats: Tensor) -> tuple[Tensor, list[AttentionTrace]]:
        x = self.embed(feats) + Tensor(self._pe[: feats.shape[1]])
        traces = []
        for att, pool in zip(self.attention, self.pool):
            x, tr = att(x)
            traces.append(tr)
            x = pool(x)
        return T.max(x, axis=1), traces


class LaneConv(Module):
    """Dilated graph convolution over the six lane relations.

    ``out = x W_f + sum_r A_r x W_r + sum_k (P^k x W_p + S^k x W_s)`` computed
    with gather/scatter over edge lists; predecessor and successor weights are
    shared across dilations.
    """

    def __init__(self, d_model: int, dilations: tuple[int, ...], rng: np.random.Generator):
        self.dilations = tuple(dilations)
        self.w_f = Linear(d_model, d_model, rng, bias=False)
        self.w_r = Linear(d_model, d_model, rng, bias=False)
        self.w_l = Linear(d_model, d_model, rng, bias=False)
        self.w_m = Linear(d_model, d_model, rng, bias=False)
        self.w_o = Linear(d_model, d_model, rng, bias=False)
        self.w_p = Linear(d_model, d_model, rng, bias=False)
        self.w_s = Linear(d_model, d_model, rng, bias=False)

    def __call__(self, x: Tensor, edges: dict) -> Tensor:
        out = self.w_f(x)
        terms = [("right", 1, self.w_r), ("left", 1, self.w_l), ("merge", 1, self.w_m), ("overlap", 1, self.w_o)]
        terms += [(rel, k, w) for k in self.dilations for rel, w in (("pred", self.w_p), ("succ", self.w_s))]
        cache: dict[int, Tensor] = {}
        for rel, k, lin in terms:
            dst, src = edges[(rel, k)]
            if len(dst) == 0:
                continue
            if id(lin) not in cache:
                cache[id(lin)] = lin(x)
            out = T.index_add(out, dst, T.index_select(cache[id(lin)], src))
        return out


class LaneConvBlock(Module):
    """LaneConv, norm, ReLU, linear, norm, then identity shortcut and ReLU."""

    def __init__(self, d_model: int, dilations: tuple[int, ...], rng: np.random.Generator):
        self.conv = LaneConv(d_model, dilations, rng)
        self.norm1 = LayerNorm(d_model)
        self.fc = Linear(d_model, d_model, rng, bias=False)
        self.norm2 = LayerNorm(d_model)

    def __call__(self, x: Tensor, edges: dict) -> Tensor:
        h = T.relu(self.norm1(self.conv(x, edges)))
        return T.relu(self.norm2(self.fc(h)) + x)


class LaneEncoder(Module):
    """Static lane features: linear input map followed by N_g LaneConv blocks."""

    def __init__(self, d_model: int, n_blocks: int, dilations: tuple[int, ...], rng: np.random.Generator):
        self.embed = Linear(LANE_FEATURES, d_model, rng)
        self.blocks = [LaneConvBlock(d_model, dilations, rng) for _ in range(n_blocks)]

    def __call__(self, feats: Tensor, edges: dict) -> Tensor:
        x = self.embed(feats)
        for block in self.blocks:
            x = block(x, edges)
        return x
