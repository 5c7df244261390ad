"""Distance-gated feature selection between base and context rows, and sigmoid lane attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..nn import FeedForward, LayerNorm, Linear, Module
from ..tensor import Tensor


@dataclass(frozen=True)
class SelectedPairs:
    base: np.ndarray  # (P,) base row indices
    context: np.ndarray  # (P,) context row indices
    disp: np.ndarray  # (P, 2) base position minus context position
    threshold: float

    def __len__(self) -> int:
        return len(self.base)


def toi_select(
    base_pos: np.ndarray,
    ctx_pos: np.ndarray,
    threshold: float,
    base_group: np.ndarray | None = None,
    ctx_group: np.ndarray | None = None,
    exclude_self: bool = False,
) -> SelectedPairs:
    """All (base, context) pairs closer than ``threshold``.

    Optional group ids restrict pairs to the same group (one scenario of a
    batch); ``exclude_self`` drops i == j when base and context are one set.
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    base_pos = np.asarray(base_pos, dtype=np.float64).reshape(-1, 2)
    ctx_pos = np.asarray(ctx_pos, dtype=np.float64).reshape(-1, 2)
    disp = base_pos[:, None, :] - ctx_pos[None, :, :]
    ok = np.hypot(disp[..., 0], disp[..., 1]) < threshold
    if base_group is not None and ctx_group is not None:
        ok &= np.asarray(base_group)[:, None] == np.asarray(ctx_group)[None, :]
    if exclude_self:
        n = min(len(base_pos), len(ctx_pos))
        ok[np.arange(n), np.arange(n)] = False
    i, j = np.nonzero(ok)
    return SelectedPairs(i.astype(np.int64), j.astype(np.int64), disp[i, j].reshape(-1, 2), float(threshold))


def all_pairs_within(groups: np.ndarray, exclude_self: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """(base, context) indices of every pair sharing a group id."""
    g = np.asarray(groups)
    ok = g[:, None] == g[None, :]
    if exclude_self:
        np.fill_diagonal(ok, False)
    i, j = np.nonzero(ok)
    return i.astype(np.int64), j.astype(np.int64)


class FeatureSelectionBlock(Module):
    """Context fusion over selected pairs with a sigmoid gate and index-add aggregation.

    Returns ``(out, att)``: ``att`` is the normalized aggregate and ``out`` is
    ``att`` after the position-wise feedforward with a residual to the base.
    """

    def __init__(self, d_model: int, ctx_dim: int, rng: np.random.Generator):
        self.base_in = Linear(d_model, d_model, rng)
        self.ctx_in = Linear(ctx_dim, d_model, rng)
        self.dist_in = Linear(2, d_model, rng)
        self.w_b = Linear(d_model, d_model, rng)
        self.w_c = Linear(2 * d_model, d_model, rng, bias=False)
        self.norm_bc = LayerNorm(d_model)
        self.w_gamma = Linear(d_model, d_model, rng)
        self.w_sigma = Linear(d_model, d_model, rng)
        self.w_g = Linear(d_model, d_model, rng)
        self.norm_g = LayerNorm(d_model)
        self.norm_att = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, rng)

    def gated(self, x_base: Tensor, x_ctx: Tensor, pairs: SelectedPairs, disp: Tensor | None = None) -> Tensor:
        """Per-pair selected features, shape (P, d_model).

        ``disp`` overrides ``pairs.disp`` when the displacements are themselves
        differentiable outputs.
        """
        b = T.index_select(self.base_in(x_base), pairs.base)
        c = T.index_select(self.ctx_in(x_ctx), pairs.context)
        dist = self.dist_in(Tensor(pairs.disp) if disp is None else disp)
        bc = T.elu(self.norm_bc(self.w_b(b) + self.w_c(T.concat([c, dist], axis=-1))))
        gamma = self.w_gamma(bc)
        x_gamma = T.sigmoid(self.w_sigma(gamma)) * self.w_g(gamma)
        return T.relu(self.norm_g(bc + x_gamma))

    def __call__(
        self, x_base: Tensor, x_ctx: Tensor, pairs: SelectedPairs, disp: Tensor | None = None
    ) -> tuple[Tensor, Tensor]:
        agg = x_base
        if len(pairs):
            agg = T.index_add(x_base, pairs.base, self.gated(x_base, x_ctx, pairs, disp))
        att = self.norm_att(agg)
        return self.ffn(att, x_base), att


class LaneAttention(Module):
    """Single-head agent-to-lane cross attention.

    With ``activation='sigmoid'`` each weight is an independent probability
    (rows need not sum to one). ``'softmax'`` gives the ordinary normalized
    variant. Weights outside ``mask`` are zero.
    """

    def __init__(self, d_model: int, rng: np.random.Generator, activation: str = "sigmoid"):
        if activation not in ("sigmoid", "softmax"):
            raise ValueError(f"activation must be 'sigmoid' or 'softmax', got {activation!r}")
        self.activation = activation
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.norm = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, rng)

    def weights(self, x_agents: Tensor, x_lanes: Tensor, mask: np.ndarray | None = None) -> Tensor:
        d = x_agents.shape[-1]
        logits = (self.wq(x_agents) @ self.wk(x_lanes).T) * (1.0 / math.sqrt(d))
        mask = np.ones(logits.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if self.activation == "sigmoid":
            return T.sigmoid(logits) * Tensor(mask.astype(np.float64))
        w = T.softmax(logits + Tensor(np.where(mask, 0.0, -1e30)), axis=-1)
        return w * Tensor(mask.astype(np.float64))

    def __call__(self, x_agents: Tensor, x_lanes: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        if x_lanes.shape[0] == 0:
            return x_agents, Tensor(np.zeros((x_agents.shape[0], 0)))
        w = self.weights(x_agents, x_lanes, mask)
        xs = self.norm(x_agents + w @ self.wv(x_lanes))
        return self.ffn(xs, x_agents), w
