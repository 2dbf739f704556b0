"""Reproducible scenario families for cross-checks and parameter sweeps."""

from __future__ import annotations

import numpy as np

from .geometry import SystemParams
from .profiles import HeterogeneityModel

__all__ = ["SWEEP_RANGES", "random_scenario", "sweep_scenario"]

# Ranges for one-parameter sweeps around the default scenario.
SWEEP_RANGES: dict[str, list[float]] = {
    "p_budget": [float(p) for p in range(1, 11)],
    "base_rate": [round(0.05 * k, 2) for k in range(1, 11)],
    "uav_altitude": [100.0 * k for k in range(1, 11)],
    "cell_radius": [100.0 * k for k in range(1, 11)],
    "pathloss_exp": [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0],
    "rice_k": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
    "beta": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
    "base_gain": [float(x) for x in np.logspace(-3, -1, 9)],
    "max_cov": [0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99],
}

SYSTEM_FIELDS = {"p_budget", "block_time", "cell_radius", "uav_altitude", "pathloss_exp", "noise_power", "rng_seed"}
MODEL_FIELDS = {"beta", "base_rate", "max_cov", "base_gain", "a1", "a2", "rice_k", "n_users"}


def sweep_scenario(params: SystemParams, model: HeterogeneityModel, name: str,
                   value: float) -> tuple[SystemParams, HeterogeneityModel]:
    """Copy of the scenario with one named field replaced."""
    if name in SYSTEM_FIELDS:
        return params.with_(**{name: value}), model
    if name in MODEL_FIELDS:
        if name == "n_users":
            value = int(value)
        return params, model.with_(**{name: value})
    raise KeyError(f"unknown parameter {name!r}")


def random_scenario(seed: int) -> tuple[SystemParams, HeterogeneityModel]:
    """Scenario drawn from broad ranges around the defaults."""
    rng = np.random.default_rng(seed)
    params = SystemParams(
        p_budget=float(rng.uniform(0.5, 5.0)),
        cell_radius=float(rng.uniform(100.0, 400.0)),
        uav_altitude=float(rng.uniform(200.0, 600.0)),
        pathloss_exp=float(rng.uniform(2.5, 3.5)),
        noise_power=1e-12,
        rng_seed=seed,
    )
    model = HeterogeneityModel(
        beta=float(rng.uniform(1.0, 10.0)),
        base_rate=float(rng.uniform(0.05, 0.3)),
        max_cov=float(rng.uniform(0.9, 0.99)),
        base_gain=float(rng.uniform(5e-3, 2e-2)),
        rice_k=float(rng.choice([0.0, 1.0, 2.0, 5.0, 10.0])),
    )
    return params, model
