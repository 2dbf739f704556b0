"""Air-to-ground channel with elevation-dependent line-of-sight probability.

The SNR is ``P d^-alpha / sigma^2`` on a line-of-sight link and
``varsigma`` times that otherwise; there is no small-scale fading. A user is
covered when the SNR exceeds ``w1 = 2^(eta/tau) - 1``, so coverage depends on
power and time only through ``P / w1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .allocator import Allocation, plan_from_vs, power_from_time, golden_section_largest
from .coverage import _check_resources, log_rate_gap
from .errors import DomainError
from .geometry import SystemParams
from .profiles import HeterogeneityModel, UserProfile, make_profiles
from .quadrature import integrate

__all__ = [
    "A2gParams",
    "AltitudePoint",
    "a2g_plan",
    "altitude_sweep",
    "coverage_threshold",
    "min_resources_a2g",
    "p_los",
    "pcov_a2g",
    "pcov_a2g_monte_carlo",
]


@dataclass(frozen=True)
class A2gParams:
    """Environment constants: logistic slope and offset, and NLoS attenuation."""

    b_env: float = 0.136
    c_env: float = 11.95
    nlos_atten: float = 0.01

    def __post_init__(self):
        if not (self.b_env > 0 and self.c_env > 0):
            raise DomainError("b_env and c_env must be positive")
        if not 0 < self.nlos_atten <= 1:
            raise DomainError(f"nlos_atten must lie in (0, 1], got {self.nlos_atten}")

    def with_(self, **changes) -> "A2gParams":
        return replace(self, **changes)


def p_los(d, params: SystemParams, a2g: A2gParams):
    """Line-of-sight probability at UAV distance ``d`` (elevation in degrees)."""
    d_arr = np.asarray(d, dtype=float)
    h = params.uav_altitude
    if np.any(d_arr < h * (1.0 - 1e-12)):
        raise DomainError("distance below the UAV altitude")
    theta = np.degrees(np.arcsin(np.minimum(h / d_arr, 1.0)))
    c = a2g.c_env
    out = 1.0 / (1.0 + c * np.exp(-a2g.b_env * (theta - c)))
    return float(out) if out.ndim == 0 else out


def _cutoff_radius(log_ratio: float, params: SystemParams) -> float:
    """Horizontal radius within which ``d^alpha <= exp(log_ratio)``, clipped to ``[0, L]``."""
    L, h = params.cell_radius, params.uav_altitude
    log_d2 = 2.0 * log_ratio / params.pathloss_exp
    if log_d2 >= math.log(L * L + h * h):
        return L
    return math.sqrt(max(math.exp(log_d2) - h * h, 0.0))


def _pcov_from_ratio(log_ratio: float, params: SystemParams, a2g: A2gParams) -> float:
    """Coverage given ``log(P / (sigma^2 w1))``."""
    L, h = params.cell_radius, params.uav_altitude
    r_los = _cutoff_radius(log_ratio, params)
    r_nlos = _cutoff_radius(log_ratio + math.log(a2g.nlos_atten), params)

    def f(r):
        return p_los(np.sqrt(r * r + h * h), params, a2g) * 2.0 * r / (L * L)

    def g(r):
        return (1.0 - p_los(np.sqrt(r * r + h * h), params, a2g)) * 2.0 * r / (L * L)

    los = integrate(f, 0.0, r_los, rel_tol=1e-10, abs_tol=1e-13)[0] if r_los > 0 else 0.0
    nlos = integrate(g, 0.0, r_nlos, rel_tol=1e-10, abs_tol=1e-13)[0] if r_nlos > 0 else 0.0
    return min(max(los + nlos, 0.0), 1.0)


def pcov_a2g(user: UserProfile, p: float, tau: float, params: SystemParams, a2g: A2gParams) -> float:
    """Coverage under the air-to-ground model.

    Sums the line-of-sight and non-line-of-sight contributions, each an
    integral over the horizontal radius up to the radius where that link
    type still meets the SNR target.
    """
    _check_resources(p, tau)
    log_ratio = math.log(p) - math.log(params.noise_power) - log_rate_gap(user.rate_threshold, tau)
    return _pcov_from_ratio(log_ratio, params, a2g)


def pcov_a2g_monte_carlo(user: UserProfile, p: float, tau: float, params: SystemParams,
                         a2g: A2gParams, trials: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Simulated coverage: uniform user radius, LoS coin flip, deterministic path loss."""
    rng = np.random.default_rng(seed)
    h = params.uav_altitude
    r = params.cell_radius * np.sqrt(rng.random(trials))
    d = np.sqrt(r * r + h * h)
    los = rng.random(trials) < p_los(d, params, a2g)
    snr = p * d ** (-params.pathloss_exp) / params.noise_power
    snr = np.where(los, snr, a2g.nlos_atten * snr)
    hits = np.count_nonzero(tau * np.log2(1.0 + snr) >= user.rate_threshold)
    prob = hits / trials
    return prob, math.sqrt(prob * (1.0 - prob) / trials)


def coverage_threshold(user: UserProfile, params: SystemParams, a2g: A2gParams) -> float:
    """Smallest ``P / w1`` for which the user meets its coverage target.

    Any allocation with ``P = threshold * (2^(eta/tau) - 1)`` meets the target
    with equality, so this constant plays the same role as ``V`` in the
    Rician analysis.
    """
    alpha = params.pathloss_exp
    log_sigma = math.log(params.noise_power)
    # Below h^alpha nobody is covered; above dmax^alpha/varsigma everyone is.
    lo = alpha * math.log(params.uav_altitude)
    hi = alpha * math.log(params.d_max) - math.log(a2g.nlos_atten)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _pcov_from_ratio(mid, params, a2g) >= user.cov_threshold:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    return math.exp(hi + log_sigma)


def min_resources_a2g(user: UserProfile, params: SystemParams, a2g: A2gParams,
                      n_tau: int = 200) -> Optional[tuple[float, float, float]]:
    """Per-user minimum-energy operating point ``(P, tau, energy)``.

    Scans a log-spaced grid of time shares from ``0.5 eta ln2`` to 1 and, at
    each, bisects for the smallest power meeting the coverage target.
    Returns ``None`` when even the whole block at full budget falls short.
    """
    if pcov_a2g(user, params.p_budget, 1.0, params, a2g) < user.cov_threshold:
        return None
    eta = user.rate_threshold
    taus = np.logspace(math.log10(min(0.5 * eta * math.log(2.0), 1.0)), 0.0, n_tau)
    best = None
    for tau in taus:
        lo, hi = -60.0, math.log(params.p_budget)
        if pcov_a2g(user, math.exp(hi), tau, params, a2g) < user.cov_threshold:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pcov_a2g(user, math.exp(mid), tau, params, a2g) >= user.cov_threshold:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-12:
                break
        p = math.exp(hi)
        energy = p * tau * params.block_time
        if best is None or energy < best[2]:
            best = (p, float(tau), energy)
    return best


def _uniform_a2g(profiles: Sequence[UserProfile], thresholds: np.ndarray, params: SystemParams) -> int:
    etas = np.array([u.rate_threshold for u in profiles])

    def slack(n):
        need = power_from_time(thresholds[:n], etas[:n], np.full(n, 1.0 / n))
        return params.p_budget / n - float(np.max(need))

    return golden_section_largest(slack, 0, len(profiles), len(profiles)).n_star


def a2g_plan(model: HeterogeneityModel, params: SystemParams, a2g: A2gParams,
             profiles: Sequence[UserProfile] | None = None) -> tuple[Allocation, int]:
    """Joint plan and uniform-split user count under the air-to-ground model."""
    if profiles is None:
        profiles = make_profiles(model)
    thresholds = np.array([coverage_threshold(u, params, a2g) for u in profiles])
    joint = plan_from_vs(profiles, thresholds, params, bracket=(0, len(profiles)), scheme="joint_a2g")
    return joint, _uniform_a2g(profiles, thresholds, params)


class AltitudePoint(NamedTuple):
    height: float
    n_star: int
    n_uniform: int


def _sweep_point(args) -> AltitudePoint:
    model, params, a2g, h = args
    joint, n_uniform = a2g_plan(model, params.with_(uav_altitude=h), a2g)
    return AltitudePoint(float(h), joint.n_served, n_uniform)


def altitude_sweep(model: HeterogeneityModel, params: SystemParams, a2g: A2gParams,
                   heights: Sequence[float], workers: int = 1) -> list[AltitudePoint]:
    """Served-user counts of the joint and uniform plans at each UAV altitude."""
    heights = [float(h) for h in heights]
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise DomainError("heights must be strictly ascending")
    tasks = [(model, params, a2g, h) for h in heights]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
