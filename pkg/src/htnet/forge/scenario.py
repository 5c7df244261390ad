from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..scene.frame import AgentTrack, Pose, to_local_frame
from ..scene.graph import LaneGraph
from .labels import LabelConfig, label_lanes, label_maneuver


@dataclass
class Scenario:
    graph: LaneGraph
    agents: list[AgentTrack]  # index 0 is the ego
    maneuver_labels: list[str]
    lane_labels: np.ndarray  # (n_agents, n_lanes) bool
    seed: int
    map_kind: str = "custom"
    pose: Pose = field(default_factory=lambda: Pose((0.0, 0.0), 0.0))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_lanes(self) -> int:
        return self.graph.n

    def agent_features(self) -> np.ndarray:
        return np.stack([a.features() for a in self.agents])

    def agent_positions(self) -> np.ndarray:
        return np.stack([a.anchor for a in self.agents])

    def futures(self) -> np.ndarray:
        return np.stack([a.future for a in self.agents])


def label_scenario(
    graph: LaneGraph, agents: list[AgentTrack], cfg: LabelConfig = LabelConfig()
) -> tuple[list[str], np.ndarray]:
    mane = [label_maneuver(agents, graph, i, cfg) for i in range(len(agents))]
    lanes = np.stack([label_lanes(a, graph, cfg.lane_threshold) for a in agents]) if agents else np.zeros((0, graph.n), bool)
    return mane, lanes.reshape(len(agents), graph.n)


def frame_scenario(scenario: Scenario, cfg: LabelConfig = LabelConfig()) -> Scenario:
    """Return the scenario in the ego frame with labels recomputed there."""
    graph, agents, pose = to_local_frame(scenario.graph, scenario.agents, 0)
    mane, lanes = label_scenario(graph, agents, cfg)
    return Scenario(graph, agents, mane, lanes, scenario.seed, scenario.map_kind, pose)
