"""Run configuration read from YAML (or JSON, which YAML also parses)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .forge.generator import ForgeConfig
from .forge.labels import LabelConfig
from .forge.maps import MAP_KINDS
from .model.config import ModelConfig
from .train import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    n_scenarios: int = 32
    agents: tuple[int, int] = (3, 6)
    maps: tuple[str, ...] = MAP_KINDS


@dataclass(frozen=True)
class EvalConfig:
    batch_size: int = 8
    lane_threshold: float = 0.5


@dataclass(frozen=True)
class NoiseConfig:
    mode: str = "gaussian"
    probabilities: tuple[float, ...] = (0.0, 0.01, 0.03, 0.05, 0.08)
    trials: int = 5


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    forge: ForgeConfig = ForgeConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    noise: NoiseConfig = NoiseConfig()
    extra: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d["train"].pop("model")
        return _plain(d)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, values: dict | None, section: str):
    values = dict(values or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    for k, v in list(values.items()):
        if isinstance(v, list):
            values[k] = tuple(v)
    return cls(**values)


def config_from_dict(doc: dict | None) -> RunConfig:
    doc = dict(doc or {})
    allowed = {"seed", "data", "forge", "model", "train", "eval", "noise"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    seed = int(doc.get("seed", 0))
    forge_doc = dict(doc.get("forge") or {})
    labels = _build(LabelConfig, forge_doc.pop("labels", None), "forge.labels")
    forge = _build(ForgeConfig, forge_doc, "forge")
    forge = replace(forge, labels=labels)
    model = _build(ModelConfig, doc.get("model"), "model")
    forge_steps = dict(doc.get("train") or {})
    forge_steps.setdefault("seed", seed)
    train = replace(_build(TrainConfig, forge_steps, "train"), model=model)
    return RunConfig(
        seed=seed,
        data=_build(DataConfig, doc.get("data"), "data"),
        forge=forge,
        model=model,
        train=train,
        eval=_build(EvalConfig, doc.get("eval"), "eval"),
        noise=_build(NoiseConfig, doc.get("noise"), "noise"),
    )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    doc = yaml.safe_load(Path(path).read_text())
    if doc is not None and not isinstance(doc, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return config_from_dict(doc)
