from .frame import AGENT_CLASSES, AgentTrack, Pose, rigid_transform, to_local_frame
from .graph import (
    LaneGraph,
    LaneSpec,
    LaneVector,
    MapError,
    build_lane_graph,
    dilated_adjacency,
    load_map,
    save_map,
    wrap_angle,
)

__all__ = [
    "AGENT_CLASSES",
    "AgentTrack",
    "LaneGraph",
    "LaneSpec",
    "LaneVector",
    "MapError",
    "Pose",
    "build_lane_graph",
    "dilated_adjacency",
    "load_map",
    "rigid_transform",
    "save_map",
    "to_local_frame",
    "wrap_angle",
]
