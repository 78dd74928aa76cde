"""Run-configuration parsing, validation and seed management.

Configs are YAML key-value files; unknown keys and out-of-range values
fail with the offending key path.  An empty file yields the defaults
(4 agents, 10 m range, 120 degree FoV, 128-epoch budget).

All randomness derives from one root seed: stream `purpose` uses
numpy SeedSequence(entropy=root, spawn_key=(PURPOSE_IDS[purpose],)), so
parallel workers and subsystems get independent, reproducible streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .neural import NetConfig
from .training import TrainConfig
from .world import MapGenParams, SensorSpec

PURPOSE_IDS = {
    "maps": 0,
    "episode": 1,
    "planner": 2,
    "torch": 3,
    "collect": 4,
    "update": 5,
    "validate": 6,
    "heldout": 7,
}


class ConfigError(ValueError):
    pass


def seed_stream(root: int, purpose: str) -> np.random.Generator:
    """Independent generator for a named purpose under one root seed."""
    if purpose not in PURPOSE_IDS:
        raise ConfigError(f"unknown seed purpose '{purpose}'")
    return np.random.default_rng(
        np.random.SeedSequence(entropy=root, spawn_key=(PURPOSE_IDS[purpose],)))


def derive_seed(root: int, purpose: str, index: int = 0) -> int:
    """Stable 32-bit seed for (root, purpose, index)."""
    ss = np.random.SeedSequence(entropy=root,
                                spawn_key=(PURPOSE_IDS[purpose], index))
    return int(ss.generate_state(1)[0])


@dataclass
class MapSection:
    dir: str | None = None            # load every .pgm in this directory
    count: int = 20                   # else generate `count` maps
    width_m: float = 30.0
    height_m: float = 30.0
    resolution: float = 0.5
    room_density: float = 1.0
    room_min_m: float = 3.5
    room_max_m: float = 9.0
    corridor_w_m: float = 3.0
    start_size_m: float = 6.0

    def gen_params(self) -> MapGenParams:
        return MapGenParams(self.width_m, self.height_m, self.resolution,
                            self.room_density, self.room_min_m, self.room_max_m,
                            self.corridor_w_m, self.start_size_m)


@dataclass
class PlannerSection:
    id: str = "nearest"
    params: dict = field(default_factory=dict)


@dataclass
class BenchSection:
    planners: list[PlannerSection] = field(default_factory=lambda: [PlannerSection()])
    seeds: list[int] = field(default_factory=lambda: [0])
    plots: int = 2        # SVG renders per planner
    workers: int = 1      # 1 = single-threaded deterministic mode


@dataclass
class RunConfig:
    seed: int = 0
    agents: int = 4
    max_epochs: int = 128
    sensor: SensorSpec = field(default_factory=SensorSpec)
    map: MapSection = field(default_factory=MapSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchSection = field(default_factory=BenchSection)

    def validate(self) -> "RunConfig":
        if self.agents < 1:
            raise ConfigError("key 'agents': must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("key 'max_epochs': must be >= 1")
        return self


def _build(section: str, cls, data: dict, special: dict | None = None):
    allowed = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for key, value in data.items():
        path = f"{section}.{key}" if section else key
        if key not in allowed:
            raise ConfigError(f"key '{path}': unknown key")
        if special and key in special:
            value = special[key](value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"section '{section or '<root>'}': {exc}") from exc


def _planner_list(raw) -> list[PlannerSection]:
    out = []
    for item in raw:
        if isinstance(item, str):
            out.append(PlannerSection(id=item))
        else:
            out.append(_build("bench.planners", PlannerSection, item))
    return out


def parse_config(text: str) -> RunConfig:
    """Parse + validate a YAML run config; '' yields paper defaults."""
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    sections = {
        "sensor": lambda d: _build("sensor", SensorSpec, d),
        "map": lambda d: _build("map", MapSection, d),
        "planner": lambda d: _build("planner", PlannerSection, d),
        "train": lambda d: _build("train", TrainConfig, d,
                                  {"net": lambda n: _build("train.net", NetConfig, n)}),
        "bench": lambda d: _build("bench", BenchSection, d,
                                  {"planners": _planner_list}),
    }
    kwargs = {}
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, dict) and key != "bench":
                raise ConfigError(f"key '{key}': expected a mapping")
            kwargs[key] = sections[key](value or {})
        elif key in RunConfig.__dataclass_fields__:
            kwargs[key] = value
        else:
            raise ConfigError(f"key '{key}': unknown key")
    return RunConfig(**kwargs).validate()


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: RunConfig) -> str:
    data = asdict(cfg)
    data["train"]["net"]["conv_channels"] = list(cfg.train.net.conv_channels)
    data["train"]["net"]["conv_kernels"] = list(cfg.train.net.conv_kernels)
    return yaml.safe_dump(data, sort_keys=True)
