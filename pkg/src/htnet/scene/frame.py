"""Agent tracks and rigid re-expression of a scene in the ego frame."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .graph import LaneGraph, LaneVector, wrap_angle

AGENT_CLASSES = ("car", "bicycle", "pedestrian")
AGENT_FEATURES = 6  # dx, dy, flag, class one-hot (3)


@dataclass
class AgentTrack:
    """One agent: ``history`` rows are (dx, dy, flag), oldest first, ending at t=0."""

    agent_id: int
    cls: str
    history: np.ndarray
    anchor: np.ndarray
    future: np.ndarray | None = None

    def __post_init__(self):
        if self.cls not in AGENT_CLASSES:
            raise ValueError(f"unknown agent class {self.cls!r}")
        self.history = np.asarray(self.history, dtype=np.float64).reshape(-1, 3)
        self.anchor = np.asarray(self.anchor, dtype=np.float64).reshape(2)
        if self.future is not None:
            self.future = np.asarray(self.future, dtype=np.float64).reshape(-1, 2)

    @property
    def perceived(self) -> int:
        return int(self.history[:, 2].sum())

    def features(self) -> np.ndarray:
        out = np.zeros((len(self.history), AGENT_FEATURES))
        out[:, :3] = self.history
        out[:, 3 + AGENT_CLASSES.index(self.cls)] = 1.0
        return out

    def heading(self, eps: float = 1e-6) -> float | None:
        """Heading of the last perceived non-zero displacement, if any."""
        for dx, dy, flag in self.history[::-1]:
            if flag > 0 and math.hypot(dx, dy) > eps:
                return math.atan2(dy, dx)
        return None

    def speed(self, dt: float = 0.1) -> float:
        """Speed over the most recent perceived step."""
        for dx, dy, flag in self.history[::-1]:
            if flag > 0:
                return math.hypot(dx, dy) / dt
        return 0.0


@dataclass(frozen=True)
class Pose:
    origin: tuple[float, float]
    heading: float
    fallback: bool = False


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rigid_transform(
    graph: LaneGraph, agents: list[AgentTrack], theta: float, shift
) -> tuple[LaneGraph, list[AgentTrack]]:
    """Rotate everything by ``theta`` about the origin, then translate by ``shift``."""
    R = _rot(theta)
    t = np.asarray(shift, dtype=np.float64).reshape(2)
    vectors = []
    for v in graph.vectors:
        d = R @ np.array([v.dx, v.dy])
        a = R @ np.array(v.anchor) + t
        vectors.append(
            LaneVector(
                v.lane_id, float(d[0]), float(d[1]), wrap_angle(v.heading + theta), v.turn, v.traf,
                v.intersect, (float(a[0]), float(a[1])),
            )
        )
    new_graph = replace(graph, vectors=vectors)
    moved = []
    for a in agents:
        hist = a.history.copy()
        hist[:, :2] = hist[:, :2] @ R.T
        fut = None if a.future is None else a.future @ R.T + t
        moved.append(AgentTrack(a.agent_id, a.cls, hist, R @ a.anchor + t, fut))
    return new_graph, moved


def ego_pose(ego: AgentTrack) -> Pose:
    h = ego.heading()
    return Pose((float(ego.anchor[0]), float(ego.anchor[1])), 0.0 if h is None else h, h is None)


def to_local_frame(
    graph: LaneGraph, agents: list[AgentTrack], ego_index: int = 0
) -> tuple[LaneGraph, list[AgentTrack], Pose]:
    """Re-express the scene with the ego at the origin facing +x.

    When the ego never moves over its perceived history the heading falls back
    to 0 and ``Pose.fallback`` is set.
    """
    pose = ego_pose(agents[ego_index])
    theta = -pose.heading
    shift = -(_rot(theta) @ np.array(pose.origin))
    g, moved = rigid_transform(graph, agents, theta, shift)
    # exact zero for the ego anchor
    moved[ego_index].anchor = np.zeros(2)
    return g, moved, pose
