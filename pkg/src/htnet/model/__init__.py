from .batch import Batch, make_batch
from .config import ABLATIONS, ModelConfig
from .decoder import TrajectoryDecoder, best_mode
from .encoder import (
    AgentEncoder,
    AttentionTrace,
    ConvPool,
    LaneConv,
    LaneConvBlock,
    LaneEncoder,
    SparseAttentionBlock,
    kl_to_uniform,
    m_score,
    positional_encoding,
)
from .fusion import FeatureSelectionBlock, LaneAttention, SelectedPairs, toi_select
from .losses import LossBreakdown, LossWeights, total_loss
from .metrics import MetricsReport, compute_metrics
from .network import HolisticTransformer, ModelOutput

__all__ = [
    "ABLATIONS",
    "AgentEncoder",
    "AttentionTrace",
    "Batch",
    "ConvPool",
    "FeatureSelectionBlock",
    "HolisticTransformer",
    "LaneAttention",
    "LaneConv",
    "LaneConvBlock",
    "LaneEncoder",
    "LossBreakdown",
    "LossWeights",
    "MetricsReport",
    "ModelConfig",
    "ModelOutput",
    "SelectedPairs",
    "SparseAttentionBlock",
    "TrajectoryDecoder",
    "best_mode",
    "compute_metrics",
    "kl_to_uniform",
    "m_score",
    "make_batch",
    "positional_encoding",
    "toi_select",
    "total_loss",
]
