"""Kinematic agents on toy maps.

Agents are placed in groups, one group per entry lane. A group is a leader
and optionally followers on the same route; the group pattern picks speed
profiles that produce stopping, braking, following, overtaking and free
driving. Speeds are integrated on the 10 Hz grid, so displacements follow
directly from the speed array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..scene.frame import AgentTrack, Pose, rigid_transform
from ..scene.graph import build_lane_graph
from .labels import LabelConfig
from .maps import MapKit, build_map
from .scenario import Scenario, frame_scenario, label_scenario

MAX_GROUP = 3
CLASS_SPEED = {"car": 20.0, "bicycle": 8.0, "pedestrian": 2.0}
START_RANGE = {
    "straight": (80.0, 130.0),
    "curve": (40.0, 75.0),
    "lane_change": (80.0, 130.0),
    "T_junction": (40.0, 80.0),
    "crossing": (40.0, 80.0),
}
DEFAULT_PATTERNS = {
    "cruise": 2.0,
    "lane_change": 1.0,
    "follow": 1.5,
    "brake": 1.5,
    "queue": 1.5,
    "overtake": 1.5,
}


@dataclass(frozen=True)
class ForgeConfig:
    t_hst: int = 20
    t_fut: int = 30
    dt: float = 0.1
    segment_length: float = 10.0
    overlap_threshold: float = 2.5
    max_accel: float = 4.0
    cruise_speed: tuple[float, float] = (5.0, 15.0)
    junction_speed: tuple[float, float] = (4.0, 8.0)
    cruise_accel: tuple[float, float] = (-0.3, 1.0)
    patterns: dict = field(default_factory=lambda: dict(DEFAULT_PATTERNS))
    third_member_prob: float = 0.3
    late_prob: float = 0.12
    other_class_prob: float = 0.15
    random_pose: bool = True
    labels: LabelConfig = LabelConfig()


class Route:
    """Arc-length parameterized polyline, extrapolated linearly past both ends."""

    def __init__(self, points: np.ndarray):
        keep = np.concatenate([[True], np.hypot(*np.diff(points, axis=0).T) > 1e-9])
        self.points = points[keep]
        seg = np.diff(self.points, axis=0)
        self.cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        self.first_dir = seg[0] / np.linalg.norm(seg[0])
        self.last_dir = seg[-1] / np.linalg.norm(seg[-1])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def at(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        x = np.interp(s, self.cum, self.points[:, 0])
        y = np.interp(s, self.cum, self.points[:, 1])
        out = np.stack([x, y], axis=-1)
        before = s < 0
        after = s > self.length
        out[before] = self.points[0] + s[before, None] * self.first_dir
        out[after] = self.points[-1] + (s[after, None] - self.length) * self.last_dir
        return out


def _route(kit: MapKit, start: str, rng: np.random.Generator, choices: list[int] | None = None) -> tuple[Route, list[int]]:
    pts, lane, picks = [kit.lane(start).points], kit.lane(start), []
    while lane.successors:
        k = choices[len(picks)] if choices is not None and len(picks) < len(choices) else int(rng.integers(len(lane.successors)))
        k = min(k, len(lane.successors) - 1)
        picks.append(k)
        lane = kit.lane(lane.successors[k])
        pts.append(lane.points[1:])
    return Route(np.concatenate(pts)), picks


def _integrate(v: np.ndarray, dt: float, t0_index: int) -> np.ndarray:
    s = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)])
    return s - s[t0_index]


def _profile(v0: float, accel: np.ndarray, vmax: float, dt: float) -> np.ndarray:
    v = np.empty(len(accel) + 1)
    v[0] = v0
    for k, a in enumerate(accel):
        v[k + 1] = min(max(v[k] + a * dt, 0.0), vmax)
    return v


@dataclass
class _Member:
    cls: str
    v: np.ndarray  # speed on the time grid
    s0: float = 0.0  # arc length at t = 0
    lane_change: tuple[float, float] | None = None  # (start time, duration)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _min_gap_offset(lead: np.ndarray, follow: np.ndarray) -> float:
    """Offset o such that follow + o stays behind lead by at least 0 at all times."""
    return float(np.min(lead - follow))


class _Planner:
    def __init__(self, cfg: ForgeConfig, kit: MapKit, map_kind: str, rng: np.random.Generator):
        self.cfg, self.kit, self.rng = cfg, kit, rng
        self.n = cfg.t_hst + cfg.t_fut + 1
        self.times = (np.arange(self.n) - cfg.t_hst) * cfg.dt
        self.junction = map_kind in ("T_junction", "crossing")
        self.speed_range = cfg.junction_speed if self.junction else cfg.cruise_speed

    def u(self, lo, hi) -> float:
        return float(self.rng.uniform(lo, hi))

    def constant(self, v: float) -> np.ndarray:
        return np.full(self.n, v)

    def cruise(self, vmax: float) -> np.ndarray:
        lo, hi = self.speed_range
        v0 = min(self.u(lo, hi), vmax)
        a = self.u(*self.cfg.cruise_accel)
        return _profile(v0, np.full(self.n - 1, a), min(vmax, CLASS_SPEED["car"]), self.cfg.dt)

    def brake(self, v_lead: float) -> np.ndarray:
        v_f = v_lead + self.u(3.0, 6.0)
        t_b = self.u(-0.5, 0.3)
        b = self.u(1.5, 3.0)
        acc = np.where(self.times[:-1] >= t_b, -b, 0.0)
        v = np.empty(self.n)
        v[0] = v_f
        for k in range(self.n - 1):
            v[k + 1] = max(v[k] + acc[k] * self.cfg.dt, v_lead)
        return v

    def stopping(self, v0: float, t_stop: float) -> np.ndarray:
        """Decelerate uniformly from v0 at the window start to rest at ``t_stop``."""
        dur = t_stop - self.times[0]
        a = -min(v0 / dur, self.cfg.max_accel)
        return _profile(v0, np.full(self.n - 1, a), v0, self.cfg.dt)

    def group(self, pattern: str, has_neighbor: bool) -> list[_Member]:
        cfg = self.cfg
        vmax = CLASS_SPEED["car"]
        if pattern in ("lane_change", "overtake") and not has_neighbor:
            pattern = "cruise" if pattern == "lane_change" else "brake"
        if pattern in ("cruise", "lane_change"):
            cls = "car"
            if self.rng.random() < cfg.other_class_prob:
                cls = "bicycle" if self.rng.random() < 0.6 else "pedestrian"
            v = self.cruise(CLASS_SPEED[cls])
            m = _Member(cls, v)
            if pattern == "lane_change" and cls == "car":
                m.lane_change = (self.u(-1.5, 0.5), self.u(2.5, 3.5))
            return [m]
        if pattern == "follow":
            lead = self.cruise(vmax)
            lead = _profile(lead[0], np.full(self.n - 1, self.u(-0.3, 0.3)), vmax, cfg.dt)
            members = [_Member("car", lead), _Member("car", lead.copy())]
            gaps = [self.u(10.0, 28.0)]
        elif pattern == "brake":
            v_lead = self.u(2.0, 5.0)
            members = [_Member("car", self.constant(v_lead)), _Member("car", self.brake(v_lead))]
            gaps = [self.u(5.0, 8.0)]
        elif pattern == "queue":
            lead = self.stopping(self.u(1.5, 3.0), self.u(-1.5, -0.8))
            follow = self.stopping(self.u(3.0, 5.0), self.u(-0.3, 0.0))
            members = [_Member("car", lead), _Member("car", follow)]
            gaps = [self.u(7.0, 11.0)]
        elif pattern == "overtake":
            v_lead = self.u(3.0, 6.0)
            lead = _Member("car", self.constant(v_lead))
            follow = _Member("car", self.constant(v_lead + self.u(3.0, 6.0)), lane_change=(self.u(-1.5, -0.5), self.u(2.5, 3.0)))
            members = [lead, follow]
            gaps = None  # placed by gap at t = 0
        else:
            raise ValueError(f"unknown pattern {pattern!r}")

        s_lead = _integrate(members[0].v, cfg.dt, cfg.t_hst)
        s_f = _integrate(members[1].v, cfg.dt, cfg.t_hst)
        if gaps is None:
            members[1].s0 = -self.u(7.0, 12.0)
        else:
            members[1].s0 = _min_gap_offset(s_lead, s_f) - gaps[0]
        if pattern != "overtake" and self.rng.random() < cfg.third_member_prob:
            third = _Member("car", members[1].v.copy())
            third.s0 = members[1].s0 - self.u(10.0, 20.0)
            members.append(third)
        return members


def _lane_neighbors(kit: MapKit, lane_id: str) -> list[str]:
    lane = kit.lane(lane_id)
    return [x for x in (lane.left, lane.right) if x is not None]


def _pick_pattern(rng: np.random.Generator, patterns: dict) -> str:
    names = sorted(patterns)
    w = np.array([patterns[k] for k in names], dtype=np.float64)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


def capacity(map_kind: str) -> int:
    return MAX_GROUP * len(build_map(map_kind).entries)


def generate_raw_scenario(map_kind: str, n_agents: int, seed: int, cfg: ForgeConfig = ForgeConfig()) -> Scenario:
    """Scenario in global coordinates (labels computed there as well)."""
    if n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {n_agents}")
    kit = build_map(map_kind)
    cap = MAX_GROUP * len(kit.entries)
    if n_agents > cap:
        raise ValueError(f"map {map_kind!r} holds at most {cap} agents, requested {n_agents}")
    rng = np.random.default_rng(seed)
    planner = _Planner(cfg, kit, map_kind, rng)
    lo, hi = START_RANGE[map_kind]

    entries = list(kit.entries)
    rng.shuffle(entries)
    plans: list[tuple[str, list[_Member]]] = []
    remaining = n_agents
    for k, lane_id in enumerate(entries):
        if remaining == 0:
            break
        lanes_left = len(entries) - k
        # enough room must remain on later lanes
        min_here = max(1, remaining - MAX_GROUP * (lanes_left - 1))
        pattern = _pick_pattern(rng, cfg.patterns)
        members = planner.group(pattern, bool(_lane_neighbors(kit, lane_id)))
        if len(members) < min_here:
            while len(members) < min_here:
                extra = _Member("car", members[-1].v.copy())
                extra.s0 = members[-1].s0 - planner.u(10.0, 20.0)
                members.append(extra)
        members = members[: min(remaining, MAX_GROUP)]
        remaining -= len(members)
        plans.append((lane_id, members))

    tracks: list[AgentTrack] = []
    for lane_id, members in plans:
        route, picks = _route(kit, lane_id, rng)
        lead_s = planner.u(lo, hi)
        neighbors = _lane_neighbors(kit, lane_id)
        side = neighbors[int(rng.integers(len(neighbors)))] if neighbors else None
        for m in members:
            s = _integrate(m.v, cfg.dt, cfg.t_hst) + lead_s + m.s0
            pos = route.at(s)
            if m.lane_change is not None and side is not None:
                other, _ = _route(kit, side, rng, picks)
                t_c, dur = m.lane_change
                alpha = _smoothstep((planner.times - t_c) / dur)[:, None]
                pos = (1.0 - alpha) * pos + alpha * other.at(s)
            tracks.append(_track_from_positions(len(tracks), m.cls, pos, cfg))

    order = list(range(len(tracks)))
    moving = [i for i in order if tracks[i].heading() is not None]
    ego = moving[int(rng.integers(len(moving)))] if moving else 0
    order.remove(ego)
    rng.shuffle(order)
    agents = [tracks[ego]] + [tracks[i] for i in order]
    for idx, a in enumerate(agents):
        a.agent_id = idx
        if idx > 0 and rng.random() < cfg.late_prob:
            seen = int(rng.integers(1, cfg.labels.u_min))
            a.history[: cfg.t_hst - seen] = 0.0

    graph = build_lane_graph(kit.lanes, cfg.segment_length, cfg.overlap_threshold)
    if cfg.random_pose:
        theta = float(rng.uniform(-math.pi, math.pi))
        shift = rng.uniform(-500.0, 500.0, size=2)
        graph, agents = rigid_transform(graph, agents, theta, shift)
    mane, lanes = label_scenario(graph, agents, cfg.labels)
    return Scenario(graph, agents, mane, lanes, seed, map_kind, Pose((0.0, 0.0), 0.0))


def _track_from_positions(agent_id: int, cls: str, pos: np.ndarray, cfg: ForgeConfig) -> AgentTrack:
    past = pos[: cfg.t_hst + 1]
    hist = np.zeros((cfg.t_hst, 3))
    hist[:, :2] = np.diff(past, axis=0)
    hist[:, 2] = 1.0
    return AgentTrack(agent_id, cls, hist, pos[cfg.t_hst].copy(), pos[cfg.t_hst + 1 :].copy())


def generate_scenario(map_kind: str, n_agents: int, seed: int, cfg: ForgeConfig = ForgeConfig()) -> Scenario:
    """Deterministic synthetic scenario in the ego frame."""
    return frame_scenario(generate_raw_scenario(map_kind, n_agents, seed, cfg), cfg.labels)


def generate_dataset(
    n: int, seed: int, map_kinds=None, agents: tuple[int, int] = (3, 6), cfg: ForgeConfig = ForgeConfig()
) -> list[Scenario]:
    """``n`` scenarios cycling through map kinds; per-scenario seeds derive from ``seed``."""
    from .maps import MAP_KINDS

    kinds = tuple(map_kinds or MAP_KINDS)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=n)
    out = []
    for k in range(n):
        kind = kinds[k % len(kinds)]
        n_ag = int(rng.integers(agents[0], agents[1] + 1))
        n_ag = min(n_ag, capacity(kind))
        out.append(generate_scenario(kind, n_ag, int(seeds[k]), cfg))
    return out
