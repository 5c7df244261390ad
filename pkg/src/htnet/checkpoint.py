"""Parameter checkpoints: named float64 arrays in an ``.npz`` container."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import Module

_META_KEY = "__meta__"


def save_parameters(path: str | Path, module: Module, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: np.ascontiguousarray(p.data, dtype=np.float64) for name, p in module.named_parameters()}
    if meta is not None:
        arrays[_META_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_parameters(path: str | Path, module: Module) -> dict | None:
    """Copy stored arrays into ``module``'s parameters; returns the metadata, if any."""
    with np.load(Path(path)) as store:
        names = set(store.files) - {_META_KEY}
        expected = dict(module.named_parameters())
        missing = set(expected) - names
        extra = names - set(expected)
        if missing or extra:
            raise ValueError(
                f"checkpoint does not match model: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}"
            )
        for name, p in expected.items():
            arr = store[name]
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.astype(np.float64, copy=True)
        if _META_KEY in store.files:
            return json.loads(bytes(store[_META_KEY]).decode())
    return None


def read_meta(path: str | Path) -> dict | None:
    with np.load(Path(path)) as store:
        if _META_KEY in store.files:
            return json.loads(bytes(store[_META_KEY]).decode())
    return None
