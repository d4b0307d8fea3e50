"""Run configuration: one JSON file drives every pipeline command.

Defaults are filled in at load time and the fully resolved config is
echoed into the output directory so any run can be reproduced from its
artifacts alone.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .geodesy import GeoPoint
from .tdoa import SensorArray, ArrayError
from .geodesy import to_enu


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "origin": "auto",
    "align": {"tol_ms": 1},
    "clean": {"threshold_m": 60.0},
    "sensors": None,
    "sim": {
        "seed": 0,
        "noise_model": "tdoa",  # or "position"
        "sigma_t": 3.3e-9,
        "position_sigma_m": 9.0,
        "outlier_rate": 0.0,
        "outlier_max_m": 200.0,
        "legs": [],
        "start": {"x": 0.0, "y": 0.0},
        "heading_deg": 0.0,
        "speed": 10.0,
        "truth_dt_ms": 100,
        "rf_interval_ms": 1000,
    },
    "filter": {
        "r_mode": "mean",
        "v_max": 20.0,
        "accel_var": 25.0,
        "omega_var": 1.0,
        "sigma_defaults": {"accel": 0.2, "jerk": 0.1, "omega": 0.02},
    },
    "paths": {"truth": "truth.csv", "rf": "rf.csv", "segments": "segments.json"},
}

# geodetic anchor used when simulating with origin "auto"
DEFAULT_SIM_ORIGIN = {"lat_deg": 35.8, "lon_deg": -78.7}


def _merge(defaults: Any, override: Any) -> Any:
    if isinstance(defaults, dict) and isinstance(override, dict):
        out = copy.deepcopy(defaults)
        for k, v in override.items():
            out[k] = _merge(defaults.get(k), v) if k in defaults else copy.deepcopy(v)
        return out
    return copy.deepcopy(override)


class RunConfig:
    """Resolved configuration plus the directory it was loaded from."""

    def __init__(self, data: dict, base_dir: Path):
        self.data = data
        self.base_dir = base_dir

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
        return cls(_merge(DEFAULTS, user), path.parent)

    @classmethod
    def from_dict(cls, user: dict, base_dir=".") -> "RunConfig":
        return cls(_merge(DEFAULTS, user), Path(base_dir))

    def origin(self) -> Optional[GeoPoint]:
        """Configured origin, or None for "auto" (first UAV sample)."""
        o = self.data["origin"]
        if o == "auto":
            return None
        try:
            return GeoPoint(float(o["lat_deg"]), float(o["lon_deg"]))
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid origin: {o!r}: {exc}") from exc

    def sim_origin(self) -> GeoPoint:
        return self.origin() or GeoPoint(**DEFAULT_SIM_ORIGIN)

    def sensor_array(self, origin: GeoPoint) -> SensorArray:
        """Sensor array in the local frame; entries may be geodetic or ENU."""
        spec = self.data["sensors"]
        if not spec:
            raise ConfigError("config has no sensor array")
        try:
            positions = []
            for entry in spec["sensors"]:
                if "x" in entry:
                    positions.append([float(entry["x"]), float(entry["y"])])
                else:
                    p = to_enu(GeoPoint(float(entry["lat_deg"]), float(entry["lon_deg"])), origin)
                    positions.append([p.x, p.y])
            return SensorArray(np.array(positions), int(spec.get("reference_idx", 0)))
        except (TypeError, KeyError, ValueError, ArrayError) as exc:
            raise ConfigError(f"invalid sensor array: {exc}") from exc

    def input_path(self, key: str) -> Path:
        """Input file path, resolved relative to the config location."""
        p = Path(self.data["paths"][key])
        return p if p.is_absolute() else self.base_dir / p

    def resolved(self) -> dict:
        return copy.deepcopy(self.data)


def write_resolved(path, cfg: RunConfig) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        json.dump(cfg.resolved(), f, indent=2, sort_keys=True)
        f.write("\n")
