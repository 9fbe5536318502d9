"""JSON run configuration. Defaults mirror the published hyperparameters; desk-scale files override them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .denoiser import ModelConfig, TrainConfig
from .joint import FULL


@dataclass
class ScheduleConfig:
    total_steps: int = 1000
    eta: float = 1.0


@dataclass
class InferenceConfig:
    steps: int = 8
    omega: float = 1.0
    eta: float | None = None
    seed: int = 0


@dataclass
class RunConfig:
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    layout: str = FULL
    folds: int = 5
    fold: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        sections = {"schedule": ScheduleConfig, "model": ModelConfig, "train": TrainConfig, "inference": InferenceConfig}
        kwargs = {k: (sections[k](**v) if k in sections else v) for k, v in d.items()}
        cfg = cls(**kwargs)
        if not 0 <= cfg.fold < cfg.folds:
            raise ValueError(f"fold {cfg.fold} outside [0, {cfg.folds})")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
