"""Toy lane maps in a canonical global frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scene.graph import LaneSpec

LANE_WIDTH = 3.5
MAP_KINDS = ("straight", "curve", "lane_change", "T_junction", "crossing")


@dataclass
class MapKit:
    lanes: list[LaneSpec]
    entries: list[str]  # lanes agents may start on; one agent group per entry

    def lane(self, lane_id: str) -> LaneSpec:
        for lane in self.lanes:
            if lane.lane_id == lane_id:
                return lane
        raise KeyError(lane_id)

    def bounds(self, margin: float = 0.0) -> tuple[float, float, float, float]:
        pts = np.concatenate([lane.points for lane in self.lanes])
        lo, hi = pts.min(axis=0) - margin, pts.max(axis=0) + margin
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def _line(a, b, step: float = 5.0) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return a + t * (b - a)


def _arc(center, radius, a0, a1, step: float = 2.0) -> np.ndarray:
    n = max(2, int(math.ceil(abs(a1 - a0) * radius / step)))
    ang = np.linspace(a0, a1, n + 1)
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def _bezier(p0, p1, p2, n: int = 12) -> np.ndarray:
    p0, p1, p2 = (np.asarray(p, float) for p in (p0, p1, p2))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def straight_map() -> MapKit:
    w = LANE_WIDTH
    lanes = [
        LaneSpec("a0", _line((0, 0), (200, 0)), left="a1"),
        LaneSpec("a1", _line((0, w), (200, w)), right="a0"),
        LaneSpec("b0", _line((200, 2.5 * w), (0, 2.5 * w))),
    ]
    return MapKit(lanes, ["a0", "a1", "b0"])


def curve_map() -> MapKit:
    w, r = LANE_WIDTH, 70.0
    lanes = []
    for idx, rad in enumerate((r, r - w)):
        y0 = r - rad  # lane 1 sits to the left of lane 0
        left = "s1" if idx == 0 else None
        right = "s0" if idx == 1 else None
        lanes.append(LaneSpec(f"s{idx}", _line((-80, y0), (0, y0)), successors=[f"k{idx}"],
                              left=left, right=right))
        lanes.append(LaneSpec(f"k{idx}", _arc((0, r), rad, -math.pi / 2, math.pi / 6),
                              turn="left", successors=[f"e{idx}"],
                              left=None if idx else "k1", right="k0" if idx else None))
        end = np.array([rad * math.cos(math.pi / 6), r + rad * math.sin(math.pi / 6)])
        heading = math.pi / 6 + math.pi / 2
        tail = end + 80.0 * np.array([math.cos(heading), math.sin(heading)])
        lanes.append(LaneSpec(f"e{idx}", _line(end, tail), left=None if idx else "e1",
                              right="e0" if idx else None))
    return MapKit(lanes, ["s0", "s1"])


def lane_change_map() -> MapKit:
    w = LANE_WIDTH
    lanes = [
        LaneSpec("l0", _line((0, 0), (220, 0)), left="l1"),
        LaneSpec("l1", _line((0, w), (220, w)), left="l2", right="l0"),
        LaneSpec("l2", _line((0, 2 * w), (220, 2 * w)), right="l1"),
    ]
    return MapKit(lanes, ["l0", "l1", "l2"])


def _junction(arms: dict[str, float], length: float = 90.0, box: float = 9.0, traf: bool = True) -> MapKit:
    """Build a junction from arms named by compass direction.

    Each arm has an inbound and an outbound lane (right-hand traffic); every
    inbound lane connects to every other arm's outbound lane.
    """
    w = LANE_WIDTH
    lanes: list[LaneSpec] = []
    inbound_end, outbound_start, outward = {}, {}, {}
    for name, ang in arms.items():
        out_dir = np.array([math.cos(ang), math.sin(ang)])
        lateral = np.array([math.sin(ang), -math.cos(ang)])  # right of the outward direction
        outward[name] = out_dir
        in_far = out_dir * (box + length) - lateral * w / 2
        in_near = out_dir * box - lateral * w / 2
        out_near = out_dir * box + lateral * w / 2
        out_far = out_dir * (box + length) + lateral * w / 2
        inbound_end[name] = in_near
        outbound_start[name] = out_near
        lanes.append(LaneSpec(f"{name}_in", _line(in_far, in_near), traf=traf))
        lanes.append(LaneSpec(f"{name}_out", _line(out_near, out_far)))
    for a in arms:
        for b in arms:
            if a == b:
                continue
            din = -outward[a]
            dout = outward[b]
            cross = din[0] * dout[1] - din[1] * dout[0]
            dot = float(din @ dout)
            if dot > 0.9:
                turn, path = "none", _line(inbound_end[a], outbound_start[b], step=3.0)
            else:
                turn = "left" if cross > 0 else "right"
                # control point: intersection of the two tangent lines
                p0, p2 = inbound_end[a], outbound_start[b]
                A = np.stack([din, -dout], axis=1)
                s = np.linalg.solve(A, p2 - p0)
                path = _bezier(p0, p0 + s[0] * din, p2)
            cid = f"{a}_to_{b}"
            lanes.append(LaneSpec(cid, path, turn=turn, intersect=True, successors=[f"{b}_out"]))
            next(lane for lane in lanes if lane.lane_id == f"{a}_in").successors.append(cid)
    return MapKit(lanes, [f"{name}_in" for name in arms])


def t_junction_map() -> MapKit:
    return _junction({"E": 0.0, "W": math.pi, "S": -math.pi / 2})


def crossing_map() -> MapKit:
    return _junction({"E": 0.0, "N": math.pi / 2, "W": math.pi, "S": -math.pi / 2})


BUILDERS = {
    "straight": straight_map,
    "curve": curve_map,
    "lane_change": lane_change_map,
    "T_junction": t_junction_map,
    "crossing": crossing_map,
}


def build_map(kind: str) -> MapKit:
    try:
        return BUILDERS[kind]()
    except KeyError:
        raise ValueError(f"unknown map kind {kind!r}; choose from {MAP_KINDS}") from None


def random_map(seed: int, n_lanes: int = 8) -> MapKit:
    """Random lane network for property testing.

    Lanes are random polylines; successors only point to later lanes, so the
    lane-level graph is acyclic, and fan-in and fan-out both occur. Some lanes
    get a parallel left neighbor offset by one lane width.
    """
    rng = np.random.default_rng(seed)
    lanes: list[LaneSpec] = []
    for k in range(n_lanes):
        start = rng.uniform(-150, 150, size=2)
        heading = rng.uniform(-math.pi, math.pi)
        n = int(rng.integers(2, 5))
        pts = [start]
        for _ in range(n):
            heading += rng.normal(0.0, 0.3)
            pts.append(pts[-1] + rng.uniform(8.0, 30.0) * np.array([math.cos(heading), math.sin(heading)]))
        lanes.append(LaneSpec(f"r{k}", np.array(pts), turn=str(rng.choice(["none", "left", "right"])),
                              traf=bool(rng.random() < 0.3), intersect=bool(rng.random() < 0.3)))
    for k, lane in enumerate(lanes[:-1]):
        for j in range(k + 1, n_lanes):
            if rng.random() < 0.25:
                lane.successors.append(f"r{j}")
    extra = []
    for k, lane in enumerate(lanes):
        if rng.random() < 0.4:
            seg = np.diff(lane.points, axis=0)
            normal = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / np.linalg.norm(seg, axis=1)[:, None]
            normal = np.vstack([normal, normal[-1:]])
            nid = f"r{k}L"
            extra.append(LaneSpec(nid, lane.points + LANE_WIDTH * normal, right=lane.lane_id))
            lane.left = nid
    lanes += extra
    return MapKit(lanes, [lane.lane_id for lane in lanes])
