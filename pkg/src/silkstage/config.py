"""Stage configuration: nested dataclasses with dict and JSON round-tripping."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .arms import ArmLimits, ReflexConfig
from .errors import ConfigError, InvalidParameterError
from .sensing import TimingConfig
from .silk import SilkParams


@dataclass(frozen=True)
class ScoringConfig:
    record_award: float = 10.0
    motion_rate: float = 1.0
    safety_penalty: float = 20.0


@dataclass(frozen=True)
class WeatherConfig:
    min_dwell: float = 2.0
    margin: float = 0.05
    lag_decay: float = 0.12


@dataclass(frozen=True)
class SensingConfig:
    noise_std: float = 0.002
    record_window: float = 180.0
    record_floor_margin: float = 0.01
    onset_threshold: float = 0.05
    onset_persist: int = 3
    simultaneity: float = 0.1
    crest_noise_floor: float = 0.005
    trend_window: float = 0.2
    timing: TimingConfig = field(default_factory=TimingConfig)


@dataclass(frozen=True)
class StageConfig:
    silk: SilkParams = field(default_factory=SilkParams)
    grip_a: tuple = (-0.6, 1.0)
    grip_b: tuple = (0.6, 1.0)
    limits_a: ArmLimits = field(default_factory=ArmLimits)
    limits_b: ArmLimits = field(default_factory=ArmLimits)
    reflex: ReflexConfig = field(default_factory=ReflexConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    weather: WeatherConfig = field(default_factory=WeatherConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    tick: float = 0.02
    physics_substeps: int = 10
    physics_dt: float = 0.002
    exchange_interval: float = 0.1
    duration: float = 60.0
    seed: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.tick > 0 and self.physics_substeps >= 1 and self.physics_dt > 0):
            raise ConfigError("tick, physics_substeps and physics_dt must be positive")
        if not math.isclose(self.tick, self.physics_substeps * self.physics_dt, rel_tol=1e-9):
            raise ConfigError(f"tick ({self.tick}) must equal physics_substeps x physics_dt "
                              f"({self.physics_substeps} x {self.physics_dt})")
        if not math.isclose(self.sensing.timing.tick, self.tick, rel_tol=1e-9):
            raise ConfigError("sensing.timing.tick must equal tick")
        if self.physics_dt > 0.01:
            raise ConfigError("physics_dt must be <= 0.01")
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ConfigError("duration must be finite and >= 0")
        ratio = self.exchange_interval / self.tick
        if self.exchange_interval <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("exchange_interval must be a positive multiple of tick")

    @property
    def exchange_ticks(self) -> int:
        return int(round(self.exchange_interval / self.tick))

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.tick + 1e-9))

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "StageConfig":
        return dataclasses.replace(self, **changes)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Mapping[str, Any], where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a table/object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = _NESTED.get((cls, name))
        path = f"{where}.{name}" if where else name
        if sub is not None:
            kwargs[name] = _build(sub, value, path)
        elif name in ("grip_a", "grip_b"):
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError(f"{path}: expected [y, z]")
            kwargs[name] = (float(value[0]), float(value[1]))
        else:
            default = f.default if f.default is not dataclasses.MISSING else None
            if isinstance(default, bool) or isinstance(value, bool):
                ok = isinstance(value, bool)
            elif isinstance(default, int):
                ok = isinstance(value, int)
            elif isinstance(default, float):
                ok = isinstance(value, (int, float))
                value = float(value) if ok else value
            else:
                ok = True
            if not ok:
                raise ConfigError(f"{path}: expected {type(default).__name__}, got {value!r}")
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (InvalidParameterError, ConfigError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


_NESTED = {
    (StageConfig, "silk"): SilkParams,
    (StageConfig, "limits_a"): ArmLimits,
    (StageConfig, "limits_b"): ArmLimits,
    (StageConfig, "reflex"): ReflexConfig,
    (StageConfig, "scoring"): ScoringConfig,
    (StageConfig, "weather"): WeatherConfig,
    (StageConfig, "sensing"): SensingConfig,
    (SensingConfig, "timing"): TimingConfig,
}


def config_from_dict(data: Mapping[str, Any]) -> StageConfig:
    return _build(StageConfig, data, "")


def load_config(path) -> StageConfig:
    """Read a JSON stage config. Missing fields take their defaults."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: StageConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
