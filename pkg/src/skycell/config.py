"""Scenario files.

A scenario is a JSON document whose keys carry their units, for example::

    {
      "system": {"p_budget_dbm": 30, "cell_radius_m": 200, "uav_altitude_m": 400,
                 "pathloss_exp": 3, "noise_dbm": -90, "rng_seed": 0},
      "heterogeneity": {"beta": 5, "base_rate_bps_hz": 0.1, "max_cov": 0.99,
                        "base_gain": 0.01, "rice_k": 2},
      "sweep": {"param": "p_budget", "values": [1, 2, 3]}
    }

Powers may be given in dBm (``_dbm``) or Watts (``_w``). Everything is
converted to SI units here and nowhere else.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .a2g import A2gParams
from .errors import ConfigError, DomainError
from .geometry import SystemParams, dbm_to_watts
from .profiles import HeterogeneityModel

__all__ = ["MobilitySpec", "Scenario", "load_scenario", "parse_scenario", "parse_sweep", "scenario_to_dict"]

# key in file -> (field name, converter)
_SYSTEM_KEYS = {
    "p_budget_w": ("p_budget", float),
    "p_budget_dbm": ("p_budget", dbm_to_watts),
    "block_time_s": ("block_time", float),
    "cell_radius_m": ("cell_radius", float),
    "uav_altitude_m": ("uav_altitude", float),
    "pathloss_exp": ("pathloss_exp", float),
    "noise_w": ("noise_power", float),
    "noise_dbm": ("noise_power", dbm_to_watts),
    "rng_seed": ("rng_seed", int),
}
_MODEL_KEYS = {
    "beta": ("beta", float),
    "base_rate_bps_hz": ("base_rate", float),
    "max_cov": ("max_cov", float),
    "base_gain": ("base_gain", float),
    "a1": ("a1", float),
    "a2": ("a2", float),
    "rice_k": ("rice_k", float),
    "n_users": ("n_users", int),
}
_A2G_KEYS = {
    "b_env": ("b_env", float),
    "c_env": ("c_env", float),
    "nlos_atten": ("nlos_atten", float),
    "nlos_atten_db": ("nlos_atten", lambda db: 10.0 ** (-float(db) / 10.0)),
}
_MOBILITY_KEYS = {
    "v_max_mps": ("v_max", float),
    "flight_time_s": ("flight_time", float),
    "accuracy": ("accuracy", float),
    "orbit_radius_m": ("orbit_radius", float),
}
_TOP_KEYS = {"system", "heterogeneity", "a2g", "sweep", "mobility", "mc_trials", "output_path"}


@dataclass(frozen=True)
class MobilitySpec:
    v_max: float = 20.0
    flight_time: float = 60.0
    accuracy: float = 0.1
    orbit_radius: float = 100.0


@dataclass(frozen=True)
class Scenario:
    system: SystemParams = field(default_factory=SystemParams)
    heterogeneity: HeterogeneityModel = field(default_factory=HeterogeneityModel)
    a2g: Optional[A2gParams] = None
    sweep: Optional[tuple[str, tuple[float, ...]]] = None
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    mc_trials: int = 100_000
    output_path: Optional[str] = None


def _section(raw: Any, keys: dict, what: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {what!r} must be an object")
    out = {}
    for key, value in raw.items():
        if key not in keys:
            raise ConfigError(f"unknown key {key!r} in {what!r}; expected one of {sorted(keys)}")
        name, conv = keys[key]
        if name in out:
            raise ConfigError(f"{what!r} sets {name} twice")
        try:
            out[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {what}.{key}: {value!r}") from exc
    return out


def parse_scenario(doc: dict) -> Scenario:
    """Build a :class:`Scenario` from a decoded JSON object."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    try:
        system = SystemParams(**_section(doc.get("system"), _SYSTEM_KEYS, "system"))
        model = HeterogeneityModel(**_section(doc.get("heterogeneity"), _MODEL_KEYS, "heterogeneity"))
        a2g = A2gParams(**_section(doc["a2g"], _A2G_KEYS, "a2g")) if "a2g" in doc else None
        mobility = MobilitySpec(**_section(doc.get("mobility"), _MOBILITY_KEYS, "mobility"))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    sweep = None
    if "sweep" in doc:
        raw = doc["sweep"]
        if not isinstance(raw, dict) or set(raw) != {"param", "values"}:
            raise ConfigError("sweep must be an object with exactly 'param' and 'values'")
        sweep = parse_sweep(raw["param"], raw["values"])
    trials = doc.get("mc_trials", 100_000)
    if not isinstance(trials, int) or trials < 0:
        raise ConfigError(f"mc_trials must be a nonnegative integer, got {trials!r}")
    out = doc.get("output_path")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_path must be a string")
    return Scenario(system, model, a2g, sweep, mobility, trials, out)


def parse_sweep(param: Any, values: Any) -> tuple[str, tuple[float, ...]]:
    from .scenarios import MODEL_FIELDS, SYSTEM_FIELDS

    if not isinstance(param, str) or param not in SYSTEM_FIELDS | MODEL_FIELDS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if isinstance(values, str):
        values = [v for v in values.split(",") if v.strip()]
    try:
        vals = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep values must be numbers, got {values!r}") from exc
    if not vals:
        raise ConfigError("sweep values must be nonempty")
    return param, vals


def load_scenario(path: str | Path | None) -> Scenario:
    """Read a scenario file; ``None`` gives the default scenario."""
    if path is None:
        return Scenario()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc)


def scenario_to_dict(s: Scenario) -> dict:
    """Fully resolved scenario in SI units, for provenance records."""
    return {
        "system": asdict(s.system),
        "heterogeneity": asdict(s.heterogeneity),
        "a2g": asdict(s.a2g) if s.a2g is not None else None,
        "sweep": {"param": s.sweep[0], "values": list(s.sweep[1])} if s.sweep else None,
        "mobility": asdict(s.mobility),
        "mc_trials": s.mc_trials,
        "output_path": s.output_path,
    }
