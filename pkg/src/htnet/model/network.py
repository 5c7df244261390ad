"""The full network: encoders, interaction fusion, lane attention and decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..nn import Linear, Module
from ..tensor import Tensor
from .batch import Batch
from .config import ModelConfig
from .decoder import TrajectoryDecoder, best_mode
from .encoder import AgentEncoder, AttentionTrace, LaneConvBlock, LaneEncoder
from .fusion import FeatureSelectionBlock, LaneAttention, toi_select


@dataclass
class ModelOutput:
    steps: Tensor  # (N, K, t_fut, 2) per-step displacements
    positions: Tensor  # (N, K, t_fut, 2) in the scenario frame
    probs: Tensor  # (N, K)
    maneuver: Tensor | None  # (N, 6)
    lane_weights: Tensor  # (N, M), zero across scenarios
    lane_loss: bool
    traces: list[AttentionTrace]

    @property
    def kstar(self) -> np.ndarray:
        return best_mode(self.probs.data)


class DynamicLaneEncoder(Module):
    """Lanes gather nearby agents through feature selection, then N_g LaneConv blocks."""

    def __init__(self, d_model: int, n_blocks: int, dilations, rng: np.random.Generator):
        self.select = FeatureSelectionBlock(d_model, d_model, rng)
        self.blocks = [LaneConvBlock(d_model, dilations, rng) for _ in range(n_blocks)]

    def __call__(self, lanes: Tensor, agents: Tensor, pairs, edges: dict) -> Tensor:
        x, _ = self.select(lanes, agents, pairs)
        for block in self.blocks:
            x = block(x, edges)
        return x


class HolisticTransformer(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.d_model
        self.agent_encoder = AgentEncoder(
            d, cfg.heads, cfg.effective_sparsity, cfg.n_sparse_blocks, cfg.conv_kernel, cfg.t_hst, rng
        )
        self.lane_encoder = LaneEncoder(d, cfg.n_lane_blocks, cfg.dilations, rng)
        self.dynamic_lanes = DynamicLaneEncoder(d, cfg.n_lane_blocks, cfg.dilations, rng)
        if cfg.uses_fusion:
            self.lane_fusion = [FeatureSelectionBlock(d, d, rng) for _ in range(cfg.n_fusion_blocks)]
            self.agent_fusion = [FeatureSelectionBlock(d, d, rng) for _ in range(cfg.n_fusion_blocks)]
        self.lane_attention = LaneAttention(d, rng, "sigmoid" if cfg.lane_decision else "softmax")
        if cfg.agent_decision:
            self.maneuver_head = Linear(2 * d if cfg.uses_fusion else d, 6, rng)
        self.decoder = TrajectoryDecoder(d, cfg.modes, cfg.t_fut, rng)

    def __call__(self, batch: Batch) -> ModelOutput:
        cfg = self.cfg
        lane_r, agent_r = cfg.radii
        agents, traces = self.agent_encoder(Tensor(batch.agent_features))
        lanes_static = self.lane_encoder(Tensor(batch.lane_features), batch.edges)

        lane_ctx = toi_select(batch.lane_positions, batch.agent_positions, lane_r, batch.lane_scene, batch.agent_scene)
        lanes = self.dynamic_lanes(lanes_static, agents, lane_ctx, batch.edges)

        x = agents
        decision_inputs = [agents]
        if cfg.uses_fusion:
            pairs = toi_select(batch.agent_positions, batch.lane_positions, lane_r, batch.agent_scene, batch.lane_scene)
            for block in self.lane_fusion:
                x, att_lane = block(x, lanes, pairs)
            pairs = toi_select(
                batch.agent_positions, batch.agent_positions, agent_r, batch.agent_scene, batch.agent_scene,
                exclude_self=True,
            )
            for block in self.agent_fusion:
                x, att_agent = block(x, x, pairs)
            decision_inputs = [att_lane, att_agent]

        x, lane_weights = self.lane_attention(x, lanes, batch.same_scene)
        maneuver = None
        if cfg.agent_decision:
            z = decision_inputs[0] if len(decision_inputs) == 1 else T.concat(decision_inputs, axis=-1)
            maneuver = T.softmax(self.maneuver_head(z), axis=-1)

        steps, offsets, probs = self.decoder(x)
        anchors = Tensor(batch.agent_positions.reshape(-1, 1, 1, 2))
        return ModelOutput(steps, offsets + anchors, probs, maneuver, lane_weights, cfg.lane_decision, traces)
