"""Run configuration: one schema-versioned JSON document covering every module."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .navmodel import ModelConfig
from .trainer import TrainConfig
from .world.env import WorldConfig
from .world.render import RenderConfig, view_dim

SCHEMA_VERSION = 1
RUN_ROOT_ENV = "REGNAV_RUN_ROOT"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit status 2)."""


def run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


@dataclass(frozen=True)
class SceneSetConfig:
    seed: int = 0
    n_train: int = 20
    n_val: int = 5
    n_test: int = 5
    min_size: int = 9
    max_size: int = 13
    wall_density: float = 0.15
    object_classes: int = 6
    objects_per_scene: int = 4


@dataclass(frozen=True)
class WorldSettings:
    rays: int = 9
    d_max: float = 8.0
    fov_deg: float = 90.0
    visibility_threshold: float = 3.0
    success_radius: int = 1
    max_steps: int = 100
    expert_mode: str = "recompute"

    def world_config(self, target_mode: str, auto_stop: bool = False) -> WorldConfig:
        return WorldConfig(RenderConfig(self.rays, self.d_max, self.fov_deg), self.visibility_threshold,
                           self.success_radius, self.max_steps, target_mode, self.expert_mode, auto_stop)


@dataclass(frozen=True)
class EvalSettings:
    split: str = "unseen_known_targets"
    n: int = 100
    seed: int = 1
    auto_stop: bool = False
    mode: str = "greedy"
    novel_classes: tuple = (6,)
    min_geo: int = 2


@dataclass
class RunConfig:
    scenes: SceneSetConfig = field(default_factory=SceneSetConfig)
    world: WorldSettings = field(default_factory=WorldSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "RunConfig":
        s = self.scenes
        if min(s.n_train, s.n_val, s.n_test) < 1:
            raise ConfigError("every scene split needs at least one scene")
        if not 5 <= s.min_size <= s.max_size:
            raise ConfigError(f"scene sizes must satisfy 5 <= min_size <= max_size, got {s.min_size}..{s.max_size}")
        if not 0.0 <= s.wall_density <= 0.35:
            raise ConfigError(f"wall_density must lie in [0, 0.35], got {s.wall_density}")
        if not 1 <= s.objects_per_scene <= s.object_classes:
            raise ConfigError("objects_per_scene must lie in 1..object_classes")
        want = view_dim(self.world.rays, s.object_classes)
        if self.model.view_dim != want or self.model.object_classes != s.object_classes:
            raise ConfigError(f"model expects view_dim={self.model.view_dim}, object_classes="
                              f"{self.model.object_classes}; the world produces {want}, {s.object_classes}")
        if self.eval.mode not in ("greedy", "sample"):
            raise ConfigError(f"eval mode must be greedy or sample, got {self.eval.mode!r}")
        known = set(self.train.train_classes or range(1, s.object_classes + 1))
        if known & set(self.eval.novel_classes):
            raise ConfigError("novel target classes overlap the training target classes")
        return self

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "scenes": asdict(self.scenes), "world": asdict(self.world),
                "model": self.model.to_dict(), "train": self.train.to_dict(),
                "eval": {**asdict(self.eval), "novel_classes": list(self.eval.novel_classes)}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}; expected {SCHEMA_VERSION}")
        try:
            ev = dict(d.get("eval", {}))
            if "novel_classes" in ev:
                ev["novel_classes"] = tuple(ev["novel_classes"])
            cfg = cls(SceneSetConfig(**_known(SceneSetConfig, d.get("scenes", {}))),
                      WorldSettings(**_known(WorldSettings, d.get("world", {}))),
                      ModelConfig.from_dict(_known(ModelConfig, d.get("model", {}))),
                      TrainConfig.from_dict(_known(TrainConfig, d.get("train", {}))),
                      EvalSettings(**_known(EvalSettings, ev)))
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        return cfg.validate()


def _known(cls, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(d)


def apply_overrides(d: dict, overrides: dict) -> dict:
    """Return a copy of ``d`` with dotted keys (``"train.lr"``) replaced; ``None`` values are ignored."""
    out = json.loads(json.dumps(d))
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if not name:
            raise ConfigError(f"override key {key!r} must look like section.name")
        out.setdefault(section, {})[name] = list(value) if isinstance(value, tuple) else value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    base = RunConfig().to_dict()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        for section, values in user.items():
            if isinstance(values, dict):
                base.setdefault(section, {}).update(values)
            else:
                base[section] = values
    return RunConfig.from_dict(apply_overrides(base, overrides or {}))
