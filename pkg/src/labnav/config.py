"""Run configuration: one nested YAML document per experiment."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .evaluation import EvalConfig
from .gkpn import GkpnConfig
from .losses import LossWeights
from .navigator import RobotParams
from .trainer import TrainConfig


@dataclass
class SceneSpec:
    template: str = "corridor"
    count: int = 5
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        _reject(cls, d, "scenes")
        return cls(**d)


def _reject(cls, d, section: str) -> None:
    if not isinstance(d, dict):
        raise ValueError(f"section {section!r} must be a mapping")
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown keys in {section!r}: {sorted(unknown)}")


@dataclass
class RunConfig:
    """Every section is optional; omitted keys take the dataclass defaults."""

    seed: int = 0
    output_dir: str = "runs"
    model: GkpnConfig = field(default_factory=GkpnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    robot: RobotParams = field(default_factory=RobotParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    scenes: SceneSpec = field(default_factory=SceneSpec)

    _SECTIONS = {
        "model": GkpnConfig,
        "train": TrainConfig,
        "loss": LossWeights,
        "robot": RobotParams,
        "eval": EvalConfig,
        "scenes": SceneSpec,
    }

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        known = {"seed", "output_dir", *cls._SECTIONS}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
        kw = {}
        for name, typ in cls._SECTIONS.items():
            if name in d:
                sec = d[name] or {}
                _reject(typ, sec, name)
                kw[name] = typ(**sec)
        for k in ("seed", "output_dir"):
            if k in d:
                kw[k] = d[k]
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "output_dir": self.output_dir}
        for name in self._SECTIONS:
            sec = asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text())

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()
