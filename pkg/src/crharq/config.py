"""TOML configuration: strict schema with units in key names."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import ParameterError, SystemParams
from .numerics import DomainError, SeriesControl
from .simulation import SensingMode, SimConfig

# section -> key -> (SystemParams field or None, required)
_SYSTEM_KEYS: dict[str, dict[str, tuple[str, bool]]] = {
    "timing": {
        "frame_duration_s": ("T", True),
        "sensing_duration_s": ("N", True),
        "bandwidth_hz": ("B", True),
    },
    "primary": {
        "activity_prob": ("rho", True),
        "signal_var": ("sigma_s2", True),
    },
    "channel": {
        "noise_var": ("sigma_w2", True),
        "fading_power": ("sigma_h2", True),
    },
    "power": {
        "power_busy_db": ("power_busy_db", True),
        "power_idle_db": ("power_idle_db", True),
    },
    "sensing": {
        "energy_threshold": ("lam", True),
    },
    "harq": {
        "packet_bits": ("n", True),
        "deadline_frames": ("M", True),
    },
    "qos": {
        "theta_per_bit": ("theta", False),
    },
}

_SIM_KEYS = {"frames", "seed", "batches", "mode", "theta_grid_per_bit", "warmup_frames"}
_SERIES_KEYS = {"rel_tol", "abs_floor", "max_terms"}

_FIELD_TO_KEY = {
    field: f"{section}.{key}" for section, keys in _SYSTEM_KEYS.items() for key, (field, _) in keys.items()
}
_FIELD_TO_KEY.update({"P_b": "power.power_busy_db", "P_i": "power.power_idle_db"})


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""


@dataclass(frozen=True)
class Config:
    params: SystemParams
    sim: SimConfig
    series: SeriesControl
    document: dict[str, Any]

    def resolved(self) -> dict[str, Any]:
        """Fully defaulted configuration, suitable for echoing in reports."""
        return {section: dict(values) for section, values in self.document.items()}


def _number(where: str, value: Any, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_config(doc: dict[str, Any]) -> Config:
    allowed = set(_SYSTEM_KEYS) | {"simulation", "series"}
    for section in doc:
        if section not in allowed:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(doc[section], dict):
            raise ConfigError(f"{section}: expected a table")

    kwargs: dict[str, Any] = {}
    resolved: dict[str, dict[str, Any]] = {}
    for section, keys in _SYSTEM_KEYS.items():
        table = doc.get(section, {})
        for key in table:
            if key not in keys:
                raise ConfigError(f"{section}.{key}: unknown key")
        resolved[section] = {}
        for key, (field, required) in keys.items():
            where = f"{section}.{key}"
            if key not in table:
                if required:
                    raise ConfigError(f"{where}: missing required key")
                value = 0.0
            else:
                value = _number(where, table[key], integer=field in ("n", "M"))
            kwargs[field] = value
            resolved[section][key] = value

    try:
        params = SystemParams.from_db(**kwargs)
    except ParameterError as exc:
        key = _FIELD_TO_KEY.get(exc.field, exc.field)
        raise ConfigError(f"{key}: {str(exc).split(': ', 1)[1]}") from None

    sim_table = doc.get("simulation", {})
    for key in sim_table:
        if key not in _SIM_KEYS:
            raise ConfigError(f"simulation.{key}: unknown key")
    sim_defaults = SimConfig()
    sim_values = {
        "frames": _number("simulation.frames", sim_table.get("frames", sim_defaults.frames), True),
        "seed": _number("simulation.seed", sim_table.get("seed", sim_defaults.seed), True),
        "batches": _number("simulation.batches", sim_table.get("batches", sim_defaults.batches), True),
        "mode": sim_table.get("mode", sim_defaults.sensing_mode.value),
        "theta_grid_per_bit": [
            _number("simulation.theta_grid_per_bit", t) for t in sim_table.get("theta_grid_per_bit", [])
        ],
        "warmup_frames": _number("simulation.warmup_frames", sim_table.get("warmup_frames", sim_defaults.warmup), True),
    }
    try:
        sim = SimConfig(
            frames=sim_values["frames"],
            seed=sim_values["seed"],
            sensing_mode=SensingMode(sim_values["mode"]),
            batches=sim_values["batches"],
            theta_grid=tuple(sim_values["theta_grid_per_bit"]),
            warmup=sim_values["warmup_frames"],
        )
    except ValueError as exc:
        raise ConfigError(f"simulation: {exc}") from None
    resolved["simulation"] = sim_values

    series_table = doc.get("series", {})
    for key in series_table:
        if key not in _SERIES_KEYS:
            raise ConfigError(f"series.{key}: unknown key")
    defaults = SeriesControl()
    series_values = {
        "rel_tol": _number("series.rel_tol", series_table.get("rel_tol", defaults.rel_tol)),
        "abs_floor": _number("series.abs_floor", series_table.get("abs_floor", defaults.abs_floor)),
        "max_terms": _number("series.max_terms", series_table.get("max_terms", defaults.max_terms), True),
    }
    try:
        series = SeriesControl(**series_values)
    except DomainError as exc:
        raise ConfigError(f"series: {exc}") from None
    resolved["series"] = series_values

    return Config(params=params, sim=sim, series=series, document=resolved)


def read_document(path: str | Path) -> dict[str, Any]:
    """Raw TOML document, before validation."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from None


def load_config(path: str | Path) -> Config:
    return parse_config(read_document(path))
