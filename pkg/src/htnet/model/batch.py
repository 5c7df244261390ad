"""Stack several scenarios into one set of arrays with offset indices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..forge.labels import MANEUVERS
from ..forge.scenario import Scenario

LANE_RELATIONS = ("right", "left", "merge", "overlap")


@dataclass
class Batch:
    agent_features: np.ndarray  # (N, t_hst, 6)
    agent_positions: np.ndarray  # (N, 2)
    agent_scene: np.ndarray  # (N,) scenario index
    lane_features: np.ndarray  # (M, 8)
    lane_positions: np.ndarray  # (M, 2)
    lane_scene: np.ndarray  # (M,)
    edges: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]]  # (relation, hop) -> (dst, src)
    futures: np.ndarray | None  # (N, t_fut, 2)
    maneuvers: np.ndarray  # (N,) class indices
    lane_labels: np.ndarray  # (N, M) bool, false outside the agent's scenario
    same_scene: np.ndarray  # (N, M) bool
    agent_slices: list[slice] = field(default_factory=list)
    lane_slices: list[slice] = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return len(self.agent_positions)

    @property
    def n_lanes(self) -> int:
        return len(self.lane_positions)

    @property
    def n_scenes(self) -> int:
        return len(self.agent_slices)


def make_batch(scenarios: list[Scenario], dilations=(1, 2)) -> Batch:
    if not scenarios:
        raise ValueError("cannot batch zero scenarios")
    feats, apos, ascene, lfeat, lpos, lscene, fut, mane = [], [], [], [], [], [], [], []
    edges: dict[tuple[str, int], list[tuple[np.ndarray, np.ndarray]]] = {}
    a_off = l_off = 0
    a_slices, l_slices = [], []
    have_future = all(a.future is not None for sc in scenarios for a in sc.agents)
    for s, sc in enumerate(scenarios):
        g = sc.graph
        na, nl = sc.n_agents, g.n
        feats.append(sc.agent_features())
        apos.append(sc.agent_positions())
        ascene.append(np.full(na, s))
        lfeat.append(g.features())
        lpos.append(g.positions())
        lscene.append(np.full(nl, s))
        if have_future:
            fut.append(sc.futures())
        mane.append([MANEUVERS.index(m) for m in sc.maneuver_labels])
        keys = [(r, 1) for r in LANE_RELATIONS] + [(r, k) for k in dilations for r in ("pred", "succ")]
        for name, k in keys:
            dst, src = g.edge_index(name, k)
            edges.setdefault((name, k), []).append((dst + l_off, src + l_off))
        a_slices.append(slice(a_off, a_off + na))
        l_slices.append(slice(l_off, l_off + nl))
        a_off += na
        l_off += nl
    lane_labels = np.zeros((a_off, l_off), dtype=bool)
    same = np.zeros((a_off, l_off), dtype=bool)
    for sc, sa, sl in zip(scenarios, a_slices, l_slices):
        lane_labels[sa, sl] = sc.lane_labels
        same[sa, sl] = True
    return Batch(
        agent_features=np.concatenate(feats),
        agent_positions=np.concatenate(apos),
        agent_scene=np.concatenate(ascene),
        lane_features=np.concatenate(lfeat).reshape(-1, lfeat[0].shape[1] if lfeat else 8),
        lane_positions=np.concatenate(lpos).reshape(-1, 2),
        lane_scene=np.concatenate(lscene),
        edges={k: (np.concatenate([d for d, _ in v]), np.concatenate([s for _, s in v])) for k, v in edges.items()},
        futures=np.concatenate(fut) if have_future else None,
        maneuvers=np.concatenate(mane).astype(np.int64),
        lane_labels=lane_labels,
        same_scene=same,
        agent_slices=a_slices,
        lane_slices=l_slices,
    )
