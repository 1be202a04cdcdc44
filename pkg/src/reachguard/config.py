"""Experiment configuration shared by the simulator and the harness."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Optional

CONTROLLERS = ("pure_pursuit", "disparity_extender", "replay")
CHECK_MODES = ("time_agnostic", "time_aligned")
CLOCKS = ("virtual", "wall")
TABLE_SPEEDS = (0.5, 1.0, 1.5)
SEED_ENV = "REACHGUARD_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    controller: str = "pure_pursuit"
    simplex: bool = True
    speed_setpoint: float = 0.5
    opponents: int = 0
    obstacles: str = "none"
    track: str = "oval"
    t_reach: float = 1.0
    t_runtime: float = 0.025
    param_uncertainty_pct: float = 0.0
    disturbance: tuple = (0.0, 0.0)  # half-widths of D1 (m/s^2) and D2 (rad/s)
    localization_inflation: tuple = (0.05, 0.05, 0.0, 0.05)
    localization_noise: bool = False
    opponent_uncertainty: tuple = (0.0, 0.1)  # position (m) and velocity (m/s) half-widths
    opponent_speed: float = 0.5
    duration: float = 60.0
    repeats: int = 5
    seed: int = 0
    dynamic_check_mode: str = "time_agnostic"
    clock: str = "virtual"
    control_hz: float = 20.0
    physics_hz: float = 100.0
    dwell_periods: int = 30
    stop_on_collision: bool = True
    preset: str = "sim"
    replay_log: Optional[str] = None
    table_preset: bool = False

    def __post_init__(self):
        for name in ("disturbance", "localization_inflation", "opponent_uncertainty"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.dynamic_check_mode not in CHECK_MODES:
            raise ConfigError(f"dynamic_check_mode must be one of {CHECK_MODES}")
        if self.clock not in CLOCKS:
            raise ConfigError(f"clock must be one of {CLOCKS}")
        if not self.speed_setpoint > 0:
            raise ConfigError("speed_setpoint must be positive")
        if self.table_preset and self.speed_setpoint not in TABLE_SPEEDS:
            raise ConfigError(f"table presets use speeds {TABLE_SPEEDS}")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.opponents < 0:
            raise ConfigError("opponents must be non-negative")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not (self.t_reach > 0 and self.t_runtime > 0):
            raise ConfigError("t_reach and t_runtime must be positive")
        if self.param_uncertainty_pct < 0:
            raise ConfigError("param_uncertainty_pct must be non-negative")
        if len(self.localization_inflation) != 4 or min(self.localization_inflation) < 0:
            raise ConfigError("localization_inflation needs 4 non-negative radii (x, y, v, theta)")
        if len(self.disturbance) != 2 or len(self.opponent_uncertainty) != 2:
            raise ConfigError("disturbance and opponent_uncertainty take two values")
        sub = self.physics_hz / self.control_hz
        if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
            raise ConfigError("physics_hz must be a whole multiple of control_hz")
        if self.dwell_periods < 1:
            raise ConfigError("dwell_periods must be at least 1")

    @property
    def substeps(self) -> int:
        return int(round(self.physics_hz / self.control_hz))

    @property
    def periods(self) -> int:
        return int(round(self.duration * self.control_hz))

    def replace(self, **kw) -> ExperimentConfig:
        try:
            return dataclasses.replace(self, **kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"bad config JSON: {e}") from None
        return cls.from_dict(d).with_env()

    def with_env(self) -> ExperimentConfig:
        """Apply the ``REACHGUARD_SEED`` override if set."""
        raw = os.environ.get(SEED_ENV)
        if raw is None or raw == "":
            return self
        try:
            return self.replace(seed=int(raw))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
