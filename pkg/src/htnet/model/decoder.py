"""Multimodal trajectory heads and endpoint-conditioned mode scoring."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..nn import Linear, LinearRes, Module
from ..tensor import Tensor
from .fusion import FeatureSelectionBlock, SelectedPairs


class TrajectoryDecoder(Module):
    """K regression heads and a probability head.

    Each head emits ``t_fut`` per-step displacements; their running sum gives
    positions relative to the agent anchor. Mode scores come from a feature
    selection block whose base rows are (agent, mode) copies of the fused agent
    feature placed at that mode's endpoint and whose context is every endpoint
    of the same agent, with no distance cut-off.
    """

    def __init__(self, d_model: int, modes: int, t_fut: int, rng: np.random.Generator):
        self.modes, self.t_fut = modes, t_fut
        self.res = [LinearRes(d_model, rng) for _ in range(modes)]
        self.out = [Linear(d_model, 2 * t_fut, rng) for _ in range(modes)]
        self.select = FeatureSelectionBlock(d_model, 2, rng)
        self.score = Linear(d_model, 1, rng)
        self._cumsum = np.tril(np.ones((t_fut, t_fut)))

    def mode_pairs(self, n_agents: int, endpoints: np.ndarray) -> SelectedPairs:
        K = self.modes
        rows = np.arange(n_agents * K).reshape(n_agents, K)
        base = np.repeat(rows, K, axis=1).reshape(-1)
        ctx = np.tile(rows, (1, K)).reshape(-1)
        return SelectedPairs(base, ctx, endpoints[base] - endpoints[ctx], np.inf)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (steps (N,K,t,2), offsets (N,K,t,2), probabilities (N,K))."""
        N, d = x.shape
        K, t = self.modes, self.t_fut
        heads = [self.out[k](self.res[k](x)).reshape(N, 1, t, 2) for k in range(K)]
        steps = T.concat(heads, axis=1)
        offsets = Tensor(self._cumsum) @ steps
        ends = T.index_select(offsets, [t - 1], axis=2).reshape(N * K, 2)
        base = T.index_select(x, np.repeat(np.arange(N), K))
        pairs = self.mode_pairs(N, ends.data)
        disp = T.index_select(ends, pairs.base) - T.index_select(ends, pairs.context)
        fused, _ = self.select(base, ends, pairs, disp)
        probs = T.softmax(self.score(fused).reshape(N, K), axis=-1)
        return steps, offsets, probs


def best_mode(probs: np.ndarray) -> np.ndarray:
    """Index of the most probable mode per agent; ties go to the lowest index."""
    return np.argmax(np.asarray(probs), axis=-1)
