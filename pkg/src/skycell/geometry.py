"""Cell geometry: system parameters and the UAV-to-user distance law."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class SystemParams:
    """Scenario-wide constants. All powers in Watts, lengths in meters."""

    p_budget: float = 1.0
    block_time: float = 1.0
    cell_radius: float = 200.0
    uav_altitude: float = 400.0
    pathloss_exp: float = 3.0
    noise_power: float = 1e-12
    rng_seed: int = 0

    def __post_init__(self):
        if not self.p_budget > 0:
            raise DomainError(f"p_budget must be positive, got {self.p_budget}")
        if not self.block_time > 0:
            raise DomainError(f"block_time must be positive, got {self.block_time}")
        if not self.cell_radius > 0:
            raise DomainError(f"cell_radius must be positive, got {self.cell_radius}")
        if not self.uav_altitude > 0:
            raise DomainError(f"uav_altitude must be positive, got {self.uav_altitude}")
        if not self.pathloss_exp >= 2:
            raise DomainError(f"pathloss_exp must be >= 2, got {self.pathloss_exp}")
        if not self.noise_power > 0:
            raise DomainError(f"noise_power must be positive, got {self.noise_power}")

    @property
    def d_max(self) -> float:
        """Distance from the UAV to the cell edge."""
        return math.hypot(self.cell_radius, self.uav_altitude)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def distance_pdf(d, params: SystemParams):
    """Density of the UAV-user distance, ``2d/L^2`` on ``[h, d_max]``."""
    d_arr = np.asarray(d, dtype=float)
    inside = (d_arr >= params.uav_altitude) & (d_arr <= params.d_max)
    out = np.where(inside, 2.0 * d_arr / params.cell_radius**2, 0.0)
    return float(out) if out.ndim == 0 else out


def distance_cdf(d, params: SystemParams):
    d_arr = np.asarray(d, dtype=float)
    h = params.uav_altitude
    out = np.clip((d_arr**2 - h**2) / params.cell_radius**2, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def make_rng(params: SystemParams, stream: int | None = None) -> np.random.Generator:
    """Generator seeded from ``params.rng_seed``; ``stream`` selects a substream."""
    entropy = [params.rng_seed] if stream is None else [params.rng_seed, stream]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_radii(n: int, params: SystemParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Horizontal distances of ``n`` users uniform on the disk of radius L."""
    if rng is None:
        rng = make_rng(params)
    return params.cell_radius * np.sqrt(rng.random(n))


def sample_distances(n: int, params: SystemParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``n`` UAV-user distances for users uniform on the cell disk.

    Without an explicit ``rng`` the draw is fully determined by
    ``params.rng_seed``.
    """
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    r = sample_radii(n, params, rng)
    return np.sqrt(r * r + params.uav_altitude**2)
