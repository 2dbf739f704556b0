"""Mobile UAV: slot sizing and per-slot replanning.

Once the UAV leaves the cell centre the position-averaged coverage no longer
applies, so each slot works with explicit user positions. For a user at a
known distance the Rician coverage is a single Marcum-Q tail, which can be
inverted exactly for the power-per-rate-gap constant the planner needs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

from .allocator import Allocation, plan_from_vs
from .errors import DomainError
from .geometry import SystemParams, make_rng
from .profiles import HeterogeneityModel, UserProfile, make_profiles
from .specfun import marcum_q1

__all__ = [
    "circular_waypoints",
    "marcum_q1_inverse",
    "point_user_vs",
    "replan",
    "slot_count",
    "user_positions",
]

Waypoint = tuple[float, float, float]


def slot_count(v_max: float, flight_time: float, h: float, accuracy: float) -> int:
    """Fewest slots keeping per-slot travel below ``accuracy`` times the altitude."""
    for name, val in (("v_max", v_max), ("flight_time", flight_time), ("h", h), ("accuracy", accuracy)):
        if not (math.isfinite(val) and val > 0):
            raise DomainError(f"{name} must be positive and finite, got {val}")
    # Round away float noise such as 1200/40.000000000000001 before the ceiling.
    return max(1, math.ceil(round(v_max * flight_time / (h * accuracy), 9)))


def circular_waypoints(radius: float, height: float, n_slots: int) -> list[Waypoint]:
    """Evenly spaced positions on a closed circle about the cell centre."""
    if n_slots < 1:
        raise DomainError("need at least one slot")
    ang = 2.0 * math.pi * np.arange(n_slots) / n_slots
    return [(float(radius * math.cos(a)), float(radius * math.sin(a)), float(height)) for a in ang]


def user_positions(n: int, params: SystemParams) -> np.ndarray:
    """Ground positions ``(n, 2)`` uniform on the cell disk, fixed by the seed."""
    rng = make_rng(params, stream=1)
    r = params.cell_radius * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@lru_cache(maxsize=1024)
def marcum_q1_inverse(a: float, prob: float) -> float:
    """``b`` with ``Q1(a, b) = prob``."""
    if not 0 < prob < 1:
        raise DomainError(f"prob must lie in (0, 1), got {prob}")
    hi = a + 10.0
    while marcum_q1(a, hi) > prob:
        hi *= 2.0
    return optimize.brentq(lambda b: marcum_q1(a, b) - prob, 0.0, hi, xtol=1e-14, rtol=1e-14)


def point_user_vs(profiles: Sequence[UserProfile], distances: Sequence[float],
                  params: SystemParams) -> np.ndarray:
    """Power per unit of ``2^(eta/tau) - 1`` for users at known distances.

    The coverage of a user at distance ``d`` is ``Q1(sqrt(2K), b)`` with
    ``b^2 = 2 (K+1) w1 sigma^2 d^alpha / (mu P)``, so meeting ``eps`` needs
    ``P >= 2 (K+1) sigma^2 d^alpha w1 / (mu b_eps^2)``.
    """
    out = np.empty(len(distances))
    for j, (u, d) in enumerate(zip(profiles, distances)):
        b_eps = marcum_q1_inverse(math.sqrt(2.0 * u.rice_k), u.cov_threshold)
        out[j] = (2.0 * (u.rice_k + 1.0) * params.noise_power * d**params.pathloss_exp
                  / (u.mean_gain_param * b_eps * b_eps))
    return out


def _plan_slot(args) -> Allocation:
    waypoint, profiles, positions, params = args
    x, y, h = waypoint
    if not h > 0:
        raise DomainError(f"waypoint altitude must be positive, got {h}")
    dx = positions[:, 0] - x
    dy = positions[:, 1] - y
    dist = np.sqrt(dx * dx + dy * dy + h * h)
    vs = point_user_vs(profiles, dist, params)
    return plan_from_vs(profiles, vs, params, bracket=(0, len(profiles)), scheme="slot")


def replan(waypoints: Sequence[Waypoint], model: HeterogeneityModel, params: SystemParams,
           workers: int = 1) -> list[Allocation]:
    """Independent joint plan for every waypoint.

    Users keep the ground positions drawn from ``params.rng_seed``; only the
    UAV moves, so each slot depends on its waypoint alone.
    """
    if not waypoints:
        raise DomainError("waypoints must be nonempty")
    profiles = make_profiles(model)
    positions = user_positions(len(profiles), params)
    tasks = [(tuple(map(float, w)), profiles, positions, params) for w in waypoints]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_plan_slot, tasks))
    return [_plan_slot(t) for t in tasks]
