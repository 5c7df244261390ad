"""Vectorized lane map: lane vectors and their six adjacency relations.

Lane centerlines are cut into short directed vectors. Relations are stored as
sets of ``(i, j)`` index pairs read as "row i aggregates from j", so that
``(i, j) in pred[k]`` means vector j is the k-th predecessor of vector i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_HOPS = 6
TURNS = ("none", "left", "right")
LANE_FEATURES = 8  # dx, dy, heading, turn one-hot (3), traf, intersect
MAP_FORMAT = "htnet-map"
MAP_VERSION = 1


class MapError(ValueError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass
class LaneSpec:
    """One lane centerline with its attributes and declared connectivity."""

    lane_id: str
    points: np.ndarray
    turn: str = "none"
    traf: bool = False
    intersect: bool = False
    successors: list[str] = field(default_factory=list)
    left: str | None = None
    right: str | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.turn not in TURNS:
            raise MapError(f"lane {self.lane_id}: unknown turn {self.turn!r}")


@dataclass(frozen=True)
class LaneVector:
    lane_id: str
    dx: float
    dy: float
    heading: float
    turn: str
    traf: bool
    intersect: bool
    anchor: tuple[float, float]

    @property
    def start(self) -> np.ndarray:
        return np.array([self.anchor[0] - 0.5 * self.dx, self.anchor[1] - 0.5 * self.dy])

    @property
    def end(self) -> np.ndarray:
        return np.array([self.anchor[0] + 0.5 * self.dx, self.anchor[1] + 0.5 * self.dy])


Relation = set[tuple[int, int]]


@dataclass
class LaneGraph:
    vectors: list[LaneVector]
    pred: list[Relation]  # pred[k-1] holds k-hop pairs
    succ: list[Relation]
    right: dict[int, int]
    left: dict[int, int]
    merge: Relation
    overlap: Relation
    overlap_threshold: float

    @property
    def n(self) -> int:
        return len(self.vectors)

    def features(self) -> np.ndarray:
        out = np.zeros((self.n, LANE_FEATURES))
        for i, v in enumerate(self.vectors):
            out[i, 0] = v.dx
            out[i, 1] = v.dy
            out[i, 2] = v.heading
            out[i, 3 + TURNS.index(v.turn)] = 1.0
            out[i, 6] = float(v.traf)
            out[i, 7] = float(v.intersect)
        return out

    def positions(self) -> np.ndarray:
        return np.array([v.anchor for v in self.vectors], dtype=np.float64).reshape(-1, 2)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.positions()
        d = np.array([[v.dx, v.dy] for v in self.vectors], dtype=np.float64).reshape(-1, 2)
        return pos - 0.5 * d, pos + 0.5 * d

    def relation(self, name: str, k: int = 1) -> Relation:
        if name == "pred":
            return dilated_adjacency(self, k, "pred")
        if name == "succ":
            return dilated_adjacency(self, k, "succ")
        if name in ("right", "left"):
            return set(getattr(self, name).items())
        if name in ("merge", "overlap"):
            return getattr(self, name)
        raise KeyError(name)

    def edge_index(self, name: str, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """(dst, src) integer arrays, sorted, for message passing."""
        pairs = sorted(self.relation(name, k))
        if not pairs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.array(pairs, dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def dense(self, name: str, k: int = 1) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        for i, j in self.relation(name, k):
            m[i, j] = 1.0
        return m

    def lane_neighbors(self) -> set[tuple[str, str]]:
        """Lane-level left/right neighbor pairs (both orders)."""
        out = set()
        for rel in (self.right, self.left):
            for i, j in rel.items():
                a, b = self.vectors[i].lane_id, self.vectors[j].lane_id
                out.add((a, b))
                out.add((b, a))
        return out


def dilated_adjacency(graph: LaneGraph, k: int, kind: str = "succ") -> Relation:
    """Exact k-hop predecessor or successor pairs."""
    if not 1 <= k <= MAX_HOPS:
        raise ValueError(f"hop count must be in [1, {MAX_HOPS}], got {k}")
    if kind == "pred":
        return graph.pred[k - 1]
    if kind == "succ":
        return graph.succ[k - 1]
    raise ValueError(f"kind must be 'pred' or 'succ', got {kind!r}")


def compose_hops(first: Relation, n: int, hops: int = MAX_HOPS) -> list[Relation]:
    """[R, R∘R, ...] up to ``hops`` compositions of a relation on n nodes."""
    if n == 0:
        return [set() for _ in range(hops)]
    base = np.zeros((n, n), dtype=np.int64)
    for i, j in first:
        base[i, j] = 1
    out, cur = [], base
    for _ in range(hops):
        out.append({(int(i), int(j)) for i, j in zip(*np.nonzero(cur))})
        cur = np.minimum(cur @ base, 1)
    return out


def _split_polyline(points: np.ndarray, segment_length: float) -> np.ndarray:
    seg = np.diff(points, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    n = max(1, int(round(cum[-1] / segment_length)))
    s = np.linspace(0.0, cum[-1], n + 1)
    xs = np.interp(s, cum, points[:, 0])
    ys = np.interp(s, cum, points[:, 1])
    return np.stack([xs, ys], axis=1)


def build_lane_graph(
    lanes: Sequence[LaneSpec],
    segment_length: float = 10.0,
    overlap_threshold: float = 2.5,
) -> LaneGraph:
    if segment_length <= 0:
        raise MapError(f"segment_length must be positive, got {segment_length}")
    if overlap_threshold <= 0:
        raise MapError(f"overlap_threshold must be positive, got {overlap_threshold}")
    ids = [lane.lane_id for lane in lanes]
    if len(set(ids)) != len(ids):
        raise MapError("duplicate lane ids")
    known = set(ids)

    vectors: list[LaneVector] = []
    spans: dict[str, tuple[int, int]] = {}
    for lane in lanes:
        pts = lane.points
        if len(pts) < 2:
            raise MapError(f"polyline {lane.lane_id}: needs at least 2 points")
        step = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(step <= 1e-9):
            bad = int(np.argmax(step <= 1e-9)) + 1
            raise MapError(f"polyline {lane.lane_id}: repeated point at index {bad}")
        for ref in [*lane.successors, lane.left, lane.right]:
            if ref is not None and ref not in known:
                raise MapError(f"polyline {lane.lane_id}: unknown lane reference {ref!r}")
        knots = _split_polyline(pts, segment_length)
        first = len(vectors)
        for a, b in zip(knots[:-1], knots[1:]):
            d = b - a
            mid = 0.5 * (a + b)
            vectors.append(
                LaneVector(
                    lane.lane_id,
                    float(d[0]),
                    float(d[1]),
                    float(math.atan2(d[1], d[0])),
                    lane.turn,
                    bool(lane.traf),
                    bool(lane.intersect),
                    (float(mid[0]), float(mid[1])),
                )
            )
        spans[lane.lane_id] = (first, len(vectors) - 1)

    pred1: Relation = set()
    for lane in lanes:
        lo, hi = spans[lane.lane_id]
        for v in range(lo, hi):
            pred1.add((v + 1, v))
        for nxt in lane.successors:
            pred1.add((spans[nxt][0], hi))
    succ1 = {(j, i) for i, j in pred1}
    pred = compose_hops(pred1, len(vectors))
    succ = compose_hops(succ1, len(vectors))

    mids = np.array([v.anchor for v in vectors]).reshape(-1, 2)
    right: dict[int, int] = {}
    left: dict[int, int] = {}
    for lane in lanes:
        lo, hi = spans[lane.lane_id]
        for side, table in ((lane.right, right), (lane.left, left)):
            if side is None:
                continue
            olo, ohi = spans[side]
            for v in range(lo, hi + 1):
                dist = np.hypot(*(mids[olo : ohi + 1] - mids[v]).T)
                table[v] = olo + int(np.argmin(dist))

    merge: Relation = set()
    for rel in (pred1, succ1):
        fans: dict[int, list[int]] = {}
        for i, j in rel:
            fans.setdefault(i, []).append(j)
        for members in fans.values():
            for a in members:
                for b in members:
                    if a != b:
                        merge.add((a, b))

    direct = pred1 | succ1
    overlap: Relation = set()
    n = len(vectors)
    if n:
        dist = np.hypot(mids[:, None, 0] - mids[None, :, 0], mids[:, None, 1] - mids[None, :, 1])
        for i, j in zip(*np.nonzero(dist < overlap_threshold)):
            i, j = int(i), int(j)
            if i != j and (i, j) not in direct:
                overlap.add((i, j))
    overlap |= merge

    return LaneGraph(vectors, pred, succ, right, left, merge, overlap, float(overlap_threshold))


# ---------------------------------------------------------------------------
# map fixtures


def lanes_to_dict(lanes: Iterable[LaneSpec]) -> dict:
    return {
        "format": MAP_FORMAT,
        "version": MAP_VERSION,
        "lanes": [
            {
                "id": lane.lane_id,
                "points": lane.points.tolist(),
                "turn": lane.turn,
                "traf": lane.traf,
                "intersect": lane.intersect,
                "successors": list(lane.successors),
                "left": lane.left,
                "right": lane.right,
            }
            for lane in lanes
        ],
    }


def lanes_from_dict(doc: dict) -> list[LaneSpec]:
    if doc.get("format") != MAP_FORMAT:
        raise MapError(f"not a map fixture (format={doc.get('format')!r})")
    if doc.get("version") != MAP_VERSION:
        raise MapError(f"unsupported map version {doc.get('version')!r}, expected {MAP_VERSION}")
    out = []
    for i, item in enumerate(doc.get("lanes", [])):
        try:
            out.append(
                LaneSpec(
                    item["id"],
                    item["points"],
                    item.get("turn", "none"),
                    bool(item.get("traf", False)),
                    bool(item.get("intersect", False)),
                    list(item.get("successors", [])),
                    item.get("left"),
                    item.get("right"),
                )
            )
        except KeyError as exc:
            raise MapError(f"lane entry {i}: missing field {exc}") from None
    return out


def save_map(path: str | Path, lanes: Iterable[LaneSpec]) -> None:
    Path(path).write_text(json.dumps(lanes_to_dict(lanes), indent=1))


def load_map(path: str | Path) -> list[LaneSpec]:
    return lanes_from_dict(json.loads(Path(path).read_text()))


def graph_to_dict(g: LaneGraph) -> dict:
    return {
        "vectors": [
            [v.lane_id, v.dx, v.dy, v.heading, v.turn, int(v.traf), int(v.intersect), v.anchor[0], v.anchor[1]]
            for v in g.vectors
        ],
        "pred": [sorted(map(list, r)) for r in g.pred],
        "succ": [sorted(map(list, r)) for r in g.succ],
        "right": sorted([i, j] for i, j in g.right.items()),
        "left": sorted([i, j] for i, j in g.left.items()),
        "merge": sorted(map(list, g.merge)),
        "overlap": sorted(map(list, g.overlap)),
        "overlap_threshold": g.overlap_threshold,
    }


def graph_from_dict(d: dict) -> LaneGraph:
    vectors = [
        LaneVector(str(a), float(b), float(c), float(h), str(t), bool(tr), bool(it), (float(x), float(y)))
        for a, b, c, h, t, tr, it, x, y in d["vectors"]
    ]
    pairs = lambda rows: {(int(i), int(j)) for i, j in rows}  # noqa: E731
    return LaneGraph(
        vectors,
        [pairs(r) for r in d["pred"]],
        [pairs(r) for r in d["succ"]],
        {int(i): int(j) for i, j in d["right"]},
        {int(i): int(j) for i, j in d["left"]},
        pairs(d["merge"]),
        pairs(d["overlap"]),
        float(d["overlap_threshold"]),
    )
