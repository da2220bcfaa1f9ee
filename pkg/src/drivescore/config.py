"""Run configuration: every threshold in one place, loadable from JSON with
unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from datetime import time
from pathlib import Path
from typing import Optional

from .scoring import ScoringConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    hard_brake_threshold: float = -3.0        # m/s^2
    hard_brake_min_duration: float = 0.5      # s
    night_start: str = "20:00"
    night_end: str = "06:00"
    short_trip_m: float = 5000.0
    lead_gap_threshold: float = 50.0          # m
    large_motion_threshold: float = 15.0      # deg/frame
    hist_edges: tuple[float, ...] = tuple(float(e) for e in range(-60, 61, 5))

    def night_window(self) -> tuple[time, time]:
        return (time.fromisoformat(self.night_start),
                time.fromisoformat(self.night_end))


@dataclass(frozen=True)
class GeometryConfig:
    bin_size: float = 30.0                    # m
    offroute_gate_m: float = 30.0
    turn_threshold_deg: float = 60.0
    turn_window_s: float = 15.0


@dataclass(frozen=True)
class ValidationConfig:
    max_speed: float = 70.0                   # m/s plausibility gate
    max_abs_accel: float = 15.0               # m/s^2


@dataclass(frozen=True)
class ReportConfig:
    max_evidence: int = 3


@dataclass(frozen=True)
class RunConfig:
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_SECTIONS = {
    "scoring": ScoringConfig,
    "features": FeatureConfig,
    "geometry": GeometryConfig,
    "validation": ValidationConfig,
    "report": ReportConfig,
}


def _build_section(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        coerced[f.name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**coerced)
    except Exception as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: _build_section(cls, data.get(name, {}))
              for name, cls in _SECTIONS.items()}
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(seed=seed, **kwargs)


def load_config(path: Optional[Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)
