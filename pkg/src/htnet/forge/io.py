"""Scenario files: a JSON header line followed by one JSON scenario per line.

Header: ``{"format": "htnet-scenarios", "version": 1}``.  Each record holds
``graph`` (vectors and relations), ``agents`` (id, class, history, anchor,
future), ``maneuver_labels``, ``lane_labels`` (0/1 rows), ``seed``,
``map_kind`` and ``pose``.  Floats are written with ``repr`` precision so a
round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..scene.frame import AgentTrack, Pose
from ..scene.graph import graph_from_dict, graph_to_dict
from .scenario import Scenario

FORMAT = "htnet-scenarios"
VERSION = 1


class ScenarioFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "seed": int(sc.seed),
        "map_kind": sc.map_kind,
        "pose": {"origin": list(sc.pose.origin), "heading": sc.pose.heading, "fallback": sc.pose.fallback},
        "graph": graph_to_dict(sc.graph),
        "agents": [
            {
                "id": a.agent_id,
                "cls": a.cls,
                "history": a.history.tolist(),
                "anchor": a.anchor.tolist(),
                "future": None if a.future is None else a.future.tolist(),
            }
            for a in sc.agents
        ],
        "maneuver_labels": list(sc.maneuver_labels),
        "lane_labels": sc.lane_labels.astype(int).tolist(),
    }


def scenario_from_dict(d: dict) -> Scenario:
    graph = graph_from_dict(d["graph"])
    agents = [AgentTrack(int(a["id"]), a["cls"], a["history"], a["anchor"], a["future"]) for a in d["agents"]]
    lanes = np.array(d["lane_labels"], dtype=bool).reshape(len(agents), graph.n)
    p = d["pose"]
    pose = Pose((float(p["origin"][0]), float(p["origin"][1])), float(p["heading"]), bool(p["fallback"]))
    return Scenario(graph, agents, list(d["maneuver_labels"]), lanes, int(d["seed"]), d["map_kind"], pose)


def dumps(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), separators=(",", ":"))


def write_scenarios(path: str | Path, scenarios: Iterable[Scenario]) -> int:
    """Stream scenarios to ``path``; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": FORMAT, "version": VERSION}) + "\n")
        for sc in scenarios:
            fh.write(dumps(sc) + "\n")
            n += 1
    return n


def iter_scenarios(path: str | Path) -> Iterator[Scenario]:
    """Yield scenarios one line at a time."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
        if not head:
            raise ScenarioFormatError(1, "empty file, expected a header")
        try:
            header = json.loads(head)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(1, f"malformed header: {exc.msg}") from None
        if not isinstance(header, dict) or header.get("format") != FORMAT:
            raise ScenarioFormatError(1, f"not a {FORMAT} file")
        if header.get("version") != VERSION:
            raise ScenarioFormatError(1, f"unsupported version {header.get('version')!r}, expected {VERSION}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                yield scenario_from_dict(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ScenarioFormatError(lineno, f"malformed record at column {exc.colno}: {exc.msg}") from None
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioFormatError(lineno, f"invalid record: {exc!r}") from None


def read_scenarios(path: str | Path) -> list[Scenario]:
    return list(iter_scenarios(path))
