"""Strict run configuration with chipping-demo defaults.

A run is described by one JSON object whose sections mirror the package's
parameter dataclasses (``vehicle``, ``trajectory``, ``imu``, ``residual``,
``allocation``, ``controller``, ``wrench``, ``fault``) plus the flat keys
``duration``, ``seed`` and ``out_dir``. Every key is optional; every
unknown key is an error, reported with its dotted path. An empty file (or
no file at all) therefore runs the stock scenario: helicoid flight, 10%
chip on rotor 2 at t=10 s, lightly damped IMU mount, detection threshold
0.005.
"""

import dataclasses
import json

from .allocation import AllocationParams
from .control import ControllerParams, Trajectory
from .fdi import ResidualConfig
from .sensing import ImuModel
from .simulate import ExternalWrenchParams, simulate_flight
from .vehicle import VehicleParams


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclasses.dataclass(frozen=True)
class FaultSpec:
    """One abrupt blade chip: which rotor, how deep, when.

    rotor is 1-based; 0 flies healthy and ignores the other fields.
    """

    rotor: int = 2
    depth: float = 0.10       # chip fraction of one blade
    onset: float = 10.0       # [s]

    def __post_init__(self):
        if self.rotor < 0:
            raise ValueError("fault rotor must be 0 (healthy) or 1-based")
        if self.rotor and not 0.0 < self.depth < 1.0:
            raise ValueError("chip depth must lie in (0, 1)")
        if self.onset < 0.0:
            raise ValueError("fault onset must be non-negative")


_SECTIONS = {
    "vehicle": ("vehicle", VehicleParams),
    "trajectory": ("trajectory", Trajectory),
    "imu": ("imu", ImuModel),
    "residual": ("residual", ResidualConfig),
    "allocation": ("alloc", AllocationParams),
    "controller": ("ctrl", ControllerParams),
    "wrench": ("wrench", ExternalWrenchParams),
    "fault": ("fault", FaultSpec),
}
_SCALARS = {"duration": float, "seed": int, "out_dir": str}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything one flight needs, defaulting to the stock demo."""

    vehicle: VehicleParams = dataclasses.field(default_factory=VehicleParams)
    trajectory: Trajectory = dataclasses.field(default_factory=Trajectory)
    imu: ImuModel = dataclasses.field(default_factory=ImuModel)
    residual: ResidualConfig = dataclasses.field(
        default_factory=ResidualConfig)
    alloc: AllocationParams = dataclasses.field(
        default_factory=AllocationParams)
    ctrl: ControllerParams = dataclasses.field(
        default_factory=ControllerParams)
    wrench: ExternalWrenchParams = dataclasses.field(
        default_factory=ExternalWrenchParams)
    fault: FaultSpec = dataclasses.field(default_factory=FaultSpec)
    duration: float = 55.0    # [s]
    seed: int = 0
    out_dir: str = ""         # empty: resolved by the caller

    def __post_init__(self):
        if self.fault.rotor > self.vehicle.n_rotors:
            raise ValueError("fault rotor exceeds rotor count")
        if self.duration < 0.0:
            raise ValueError("duration must be non-negative")

    def fly(self, rho_live=None):
        """Simulate this configuration once."""
        return simulate_flight(
            vehicle=self.vehicle, trajectory=self.trajectory, imu=self.imu,
            residual=self.residual, alloc=self.alloc, ctrl=self.ctrl,
            wrench=self.wrench, duration=self.duration, seed=self.seed,
            fault_rotor=self.fault.rotor, fault_depth=self.fault.depth,
            fault_onset=self.fault.onset, rho_live=rho_live)

    def to_dict(self):
        """Plain nested dict (JSON-ready) with every field spelled out."""
        out = {}
        for key, (attr, _) in _SECTIONS.items():
            out[key] = {f.name: _plain(getattr(getattr(self, attr), f.name))
                        for f in dataclasses.fields(getattr(self, attr))}
        out["duration"] = self.duration
        out["seed"] = self.seed
        out["out_dir"] = self.out_dir
        return out


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _coerce(value, default, path):
    """Match the default's shape: tuples from lists, numbers as numbers."""
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError("%s: expected a list" % path)
        return tuple(_coerce(v, default[0] if default else 0.0,
                             "%s[]" % path) for v in value)
    if isinstance(default, bool):  # bool before int: bool is an int
        if not isinstance(value, bool):
            raise ConfigError("%s: expected a boolean" % path)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("%s: expected a number" % path)
        if isinstance(value, float):
            if value != int(value):
                raise ConfigError("%s: expected an integer" % path)
            return int(value)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("%s: expected a number" % path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError("%s: expected a string" % path)
        return value
    return value


def _build_section(cls, data, path):
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError("unknown key '%s.%s'" % (path, key))
        kwargs[key] = _coerce(value, getattr(defaults, key),
                              "%s.%s" % (path, key))
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc


def run_config_from_dict(data):
    """Validate a parsed JSON object into a RunConfig.

    Unknown keys anywhere are rejected; section values must be objects;
    dataclass-level validation errors are re-raised as ConfigError with
    the offending section named.
    """
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            attr, cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigError("%s: expected an object" % key)
            kwargs[attr] = _build_section(cls, value, key)
        elif key in _SCALARS:
            kwargs[key] = _coerce(value, _SCALARS[key](), key)
        else:
            raise ConfigError("unknown key '%s'" % key)
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_run_config(path):
    """Read a JSON run configuration; empty or blank files mean defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read %s: %s" % (path, exc)) from exc
    if not text.strip():
        return RunConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s: line %d column %d: %s"
                          % (path, exc.lineno, exc.colno, exc.msg)) from exc
    return run_config_from_dict(data)
