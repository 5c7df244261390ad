"""Maneuver and lane labels computed from ground-truth futures.

Maneuver classes in priority order (first match wins):

    S  yield + stop        slow future with a yield cause
    N  yield + nudge       large heading change or lane-boundary crossing, with a yield cause
    D  yield + decelerate  decelerating but not stopped, with a yield cause
    F  following          an aligned agent ahead within the follow distance
    I  ignore             enough perceived history to judge
    U  unknown            too few perceived history frames

A yield cause is another agent ahead along the heading within
``yield_distance`` at any step from t=0 to the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scene.frame import AgentTrack
from ..scene.graph import LaneGraph, wrap_angle

MANEUVERS = ("S", "N", "D", "F", "I", "U")
YIELD_CLASSES = ("S", "N", "D")


@dataclass(frozen=True)
class LabelConfig:
    dt: float = 0.1
    stop_speed: float = 0.5
    yield_distance: float = 15.0
    follow_distance: float = 30.0
    lateral_tolerance: float = 2.0
    heading_change_deg: float = 15.0
    decel_threshold: float = -0.5
    follow_alignment_deg: float = 10.0
    u_min: int = 5
    min_step: float = 0.01  # displacement below this keeps the previous heading
    lane_threshold: float = 1.5


def track_positions(agent: AgentTrack) -> np.ndarray:
    """Positions from t=0 through the horizon, shape (t_fut+1, 2)."""
    if agent.future is None:
        raise ValueError(f"agent {agent.agent_id} has no future")
    return np.vstack([agent.anchor[None, :], agent.future])


def track_headings(agent: AgentTrack, cfg: LabelConfig = LabelConfig()) -> np.ndarray:
    pos = track_positions(agent)
    h0 = agent.heading(cfg.min_step)
    if h0 is None:
        steps = np.diff(pos, axis=0)
        moving = np.hypot(steps[:, 0], steps[:, 1]) > cfg.min_step
        h0 = math.atan2(*steps[np.argmax(moving)][::-1]) if moving.any() else 0.0
    out = np.empty(len(pos))
    out[0] = h0
    for t in range(1, len(pos)):
        d = pos[t] - pos[t - 1]
        out[t] = math.atan2(d[1], d[0]) if math.hypot(d[0], d[1]) > cfg.min_step else out[t - 1]
    return out


def speeds(agent: AgentTrack, dt: float = 0.1) -> np.ndarray:
    steps = np.diff(track_positions(agent), axis=0)
    return np.hypot(steps[:, 0], steps[:, 1]) / dt


def _leads(positions, headings, i: int, t: int, distance: float, cfg: LabelConfig, align_deg: float | None):
    me, h = positions[i][t], headings[i][t]
    fwd = np.array([math.cos(h), math.sin(h)])
    left = np.array([-fwd[1], fwd[0]])
    for j in range(len(positions)):
        if j == i or positions[j] is None:
            continue
        rel = positions[j][t] - me
        lon, lat = float(rel @ fwd), float(rel @ left)
        if 0.0 < lon <= distance and abs(lat) <= cfg.lateral_tolerance:
            if align_deg is None or abs(wrap_angle(headings[j][t] - h)) <= math.radians(align_deg):
                return True
    return False


def nearest_lane(graph: LaneGraph, point: np.ndarray) -> str | None:
    if graph.n == 0:
        return None
    d = point_segment_distance(point[None, :], *graph.segments())[0]
    return graph.vectors[int(np.argmin(d))].lane_id


def point_segment_distance(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distances, shape (n_points, n_segments)."""
    seg = ends - starts
    L2 = np.maximum((seg * seg).sum(axis=1), 1e-18)
    rel = points[:, None, :] - starts[None, :, :]
    u = np.clip((rel * seg[None]).sum(axis=2) / L2[None], 0.0, 1.0)
    closest = starts[None] + u[..., None] * seg[None]
    diff = points[:, None, :] - closest
    return np.sqrt((diff * diff).sum(axis=2))


def maneuver_conditions(
    agents: list[AgentTrack], graph: LaneGraph, i: int, cfg: LabelConfig = LabelConfig()
) -> dict[str, bool]:
    """Evaluate every class condition for agent ``i`` independently."""
    positions = [track_positions(a) if a.future is not None else None for a in agents]
    headings = [track_headings(a, cfg) if a.future is not None else None for a in agents]
    me = agents[i]
    v = speeds(me, cfg.dt)
    horizon = len(v)
    mean_speed = float(v.mean())
    mean_acc = float((v[-1] - v[0]) / ((horizon - 1) * cfg.dt)) if horizon > 1 else 0.0
    yield_cause = any(
        _leads(positions, headings, i, t, cfg.yield_distance, cfg, None) for t in range(horizon + 1)
    )
    turn = np.abs(wrap_angle(headings[i] - headings[i][0])).max() > math.radians(cfg.heading_change_deg)
    start_lane = nearest_lane(graph, positions[i][0])
    end_lane = nearest_lane(graph, positions[i][-1])
    crossed = start_lane != end_lane and (start_lane, end_lane) in graph.lane_neighbors()
    enough = me.perceived >= cfg.u_min
    return {
        "S": mean_speed < cfg.stop_speed and yield_cause,
        "N": bool(turn or crossed) and yield_cause,
        "D": mean_acc < cfg.decel_threshold and mean_speed >= cfg.stop_speed and yield_cause,
        "F": _leads(positions, headings, i, 0, cfg.follow_distance, cfg, cfg.follow_alignment_deg),
        "I": enough,
        "U": not enough,
    }


def label_maneuver(agents: list[AgentTrack], graph: LaneGraph, i: int, cfg: LabelConfig = LabelConfig()) -> str:
    cond = maneuver_conditions(agents, graph, i, cfg)
    for name in MANEUVERS:
        if cond[name]:
            return name
    return "U"


def label_lanes(agent: AgentTrack, graph: LaneGraph, lateral_threshold: float = 1.5) -> np.ndarray:
    """Lane vectors passed within ``lateral_threshold`` by any future point."""
    if agent.future is None or len(agent.future) == 0 or graph.n == 0:
        return np.zeros(graph.n, dtype=bool)
    d = point_segment_distance(agent.future, *graph.segments())
    return (d < lateral_threshold).any(axis=0)
