"""Run manifests: what went into a run, enough to repeat it."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


def blob_sha1(path: str | Path) -> str:
    """Content hash in git's blob format, so it matches ``git hash-object``."""
    data = Path(path).read_bytes()
    h = hashlib.sha1(f"blob {len(data)}\0".encode())
    h.update(data)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)  # path -> blob hash
    outputs: list[str] = field(default_factory=list)

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = blob_sha1(path)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
