"""Power and time allocation for the TDMA uplink.

For a fixed number of users the coverage constraint is relaxed to
``P_i >= V_i (2^(eta_i/tau_i) - 1)``. Minimising total energy under the time
budget then reduces to one scalar dual variable ``gamma``, and each user's
time share follows in closed form through the Lambert W function. The number
of users is chosen by an integer golden-section search over the bracket from
:mod:`skycell.bounds`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import n_lower, n_upper
from .coverage import _log_theta, coeffs_for, pcov_closed
from .errors import DomainError, NumericError
from .geometry import SystemParams
from .profiles import HeterogeneityModel, UserProfile, make_profiles
from .quadrature import integrate
from .specfun import ApproxCoeffs, bessel_i0e, w0_plus_one

log = logging.getLogger(__name__)

__all__ = [
    "MODES",
    "Allocation",
    "KktReport",
    "SearchTrace",
    "compute_v",
    "compute_vs",
    "gss_iteration_count",
    "golden_section_largest",
    "independent_power_plan",
    "joint_optimize",
    "kkt_residuals",
    "linear_scan_largest",
    "opa_optimize",
    "ota_optimize",
    "plan_from_vs",
    "power_from_time",
    "solve_p3",
    "tau_of_gamma",
    "time_from_power",
    "uniform_baseline",
]

MODES = ("general", "high_snr", "dominant_los")
GOLDEN = 0.618
LN2 = math.log(2.0)
SUM_TAU_TOL = 1e-10


@dataclass(frozen=True)
class Allocation:
    """Result of a planner. Arrays have one entry per served user."""

    n_served: int
    powers: np.ndarray
    times: np.ndarray
    energies: np.ndarray
    dual_gamma: float
    power_slack: float
    time_slack: float
    feasible: bool
    scheme: str = ""
    n_lb: int = 0
    n_ub: int = 0
    iterations: int = 0
    evaluations: int = 0
    fallback_scan: bool = False

    def __post_init__(self):
        if not (len(self.powers) == len(self.times) == len(self.energies) == self.n_served):
            raise DomainError("allocation arrays must have one entry per served user")

    @property
    def sum_power(self) -> float:
        return float(np.sum(self.powers))

    @property
    def sum_tau(self) -> float:
        return float(np.sum(self.times))


def _empty(params: SystemParams, scheme: str, **extra) -> Allocation:
    z = np.zeros(0)
    return Allocation(0, z, z, z, 0.0, params.p_budget, 1.0, False, scheme, **extra)


def _make_allocation(powers, times, params: SystemParams, gamma: float = 0.0,
                     scheme: str = "", feasible: Optional[bool] = None) -> Allocation:
    powers = np.asarray(powers, dtype=float)
    times = np.asarray(times, dtype=float)
    power_slack = params.p_budget - float(np.sum(powers))
    time_slack = 1.0 - float(np.sum(times))
    if feasible is None:
        feasible = power_slack >= 0 and time_slack >= -1e-9
    return Allocation(
        n_served=len(powers), powers=powers, times=times,
        energies=powers * times * params.block_time, dual_gamma=gamma,
        power_slack=power_slack, time_slack=time_slack, feasible=bool(feasible),
        scheme=scheme,
    )


@dataclass(frozen=True)
class KktReport:
    coverage_slack: np.ndarray
    stationarity_residual: np.ndarray
    time_residual: float
    power_residual: float
    power_multiplier_ratio: np.ndarray = field(default_factory=lambda: np.zeros(0))
    time_multiplier_ratio: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------------------
# Variable transformation
# ---------------------------------------------------------------------------

def compute_v(user: UserProfile, params: SystemParams, coeffs: ApproxCoeffs | None = None,
              mode: str = "general") -> float:
    """Power per unit of ``2^(eta/tau) - 1`` that meets the relaxed coverage target.

    ``general`` inverts ``exp(-M Theta) >= eps``, ``high_snr`` inverts
    ``1 - M Theta >= eps`` and ``dominant_los`` inverts the deterministic-gain
    coverage with gain ``mu``.
    """
    eps = user.cov_threshold
    if not 0 < eps < 1:
        raise DomainError(f"coverage target must lie in (0, 1), got {eps}")
    if mode == "dominant_los":
        L, h = params.cell_radius, params.uav_altitude
        return (eps * L * L + h * h) ** (0.5 * params.pathloss_exp) * params.noise_power / user.mean_gain_param
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}; expected one of {MODES}")
    if coeffs is None:
        coeffs = coeffs_for(user)
    budget = -math.log(eps) if mode == "general" else 1.0 - eps
    log_theta = _log_theta(0.5 * coeffs.psi * params.pathloss_exp, params)
    log_v = (math.log(2.0 * (user.rice_k + 1.0) * params.noise_power / user.mean_gain_param)
             - (2.0 / coeffs.psi) * (math.log(budget) - coeffs.phi - log_theta))
    return math.exp(log_v)


def compute_vs(profiles: Sequence[UserProfile], params: SystemParams, mode: str = "general") -> np.ndarray:
    return np.array([compute_v(u, params, None, mode) for u in profiles])


def power_from_time(v, eta, tau):
    """Minimum power ``v (2^(eta/tau) - 1)`` for time share ``tau``."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise DomainError("tau must be positive")
    with np.errstate(over="ignore"):
        out = np.asarray(v) * np.expm1(LN2 * np.asarray(eta) / tau_arr)
    return float(out) if np.ndim(out) == 0 else out


def time_from_power(v, eta, p):
    """Minimum time share ``eta / log2(1 + p/v)`` for power ``p``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0):
        raise DomainError("power must be positive")
    out = np.asarray(eta) * LN2 / np.log1p(p_arr / np.asarray(v))
    return float(out) if np.ndim(out) == 0 else out


def tau_of_gamma(gamma, v, eta):
    """Stationary time share for dual price ``gamma``.

    Solves ``v (2^x - 1 - 2^x x ln2) + gamma = 0`` for ``x = eta/tau``, i.e.
    ``tau = eta ln2 / (W0(-(1 - gamma/v)/e) + 1)``.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise DomainError("gamma must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.asarray(eta) * LN2 / w0_plus_one(g / np.asarray(v))
    return float(out) if np.ndim(out) == 0 else out


def stationarity_residual(tau, gamma, v, eta):
    """Left side of the P3 stationarity condition, ``d/dtau [e(tau)] + gamma``."""
    t = LN2 * np.asarray(eta) / np.asarray(tau)
    return np.asarray(v) * (np.expm1(t) - t * np.exp(t)) + gamma


# ---------------------------------------------------------------------------
# Fixed-N energy minimisation
# ---------------------------------------------------------------------------

def _sum_tau(log_gamma: float, vs: np.ndarray, etas: np.ndarray) -> float:
    return float(np.sum(tau_of_gamma(math.exp(log_gamma), vs, etas)))


def solve_p3(profiles: Sequence[UserProfile], vs: Sequence[float], params: SystemParams,
             scheme: str = "joint") -> Allocation:
    """Minimum-energy time split of the whole block among ``len(vs)`` users.

    Bisects ``log gamma`` until ``|sum tau - 1| <= 1e-10``; powers follow
    from the time shares. ``feasible`` reports whether the powers fit ``P_t``.

    Raises
    ------
    NumericError
        If the dual bracket cannot be established or the root is not resolved.
    """
    vs = np.asarray(vs, dtype=float)
    n = len(vs)
    if n < 1:
        raise DomainError("need at least one user")
    if np.any(~(vs > 0)) or np.any(~np.isfinite(vs)):
        raise DomainError("all V must be positive and finite")
    etas = np.array([u.rate_threshold for u in profiles[:n]], dtype=float)
    if len(etas) != n:
        raise DomainError("fewer profiles than V values")

    lo = math.log(vs.min() * 1e-9)
    hi = math.log(vs.max())
    for _ in range(2000):
        if _sum_tau(lo, vs, etas) > 1.0:
            break
        lo -= 2.0 * LN2 * 16
    else:
        raise NumericError("could not bracket the dual variable from below")
    for _ in range(2000):
        if _sum_tau(hi, vs, etas) < 1.0:
            break
        hi += LN2
    else:
        raise NumericError("could not bracket the dual variable from above")

    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        s = _sum_tau(mid, vs, etas)
        if abs(s - 1.0) <= 0.1 * SUM_TAU_TOL:
            break
        if s > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break
    gamma = math.exp(mid)
    times = tau_of_gamma(gamma, vs, etas)
    if abs(float(np.sum(times)) - 1.0) > SUM_TAU_TOL:
        raise NumericError(f"dual root not resolved: sum tau = {np.sum(times)!r}")
    powers = power_from_time(vs, etas, times)
    return _make_allocation(powers, times, params, gamma, scheme,
                            feasible=float(np.sum(powers)) <= params.p_budget)


# ---------------------------------------------------------------------------
# Search over the number of users
# ---------------------------------------------------------------------------

def gss_iteration_count(psi_tol: float, n_lb: int, n_ub: int) -> int:
    """Iteration budget ``ceil((ln psi - ln(n_ub - n_lb)) / ln 0.618) + 1``."""
    if n_ub <= n_lb:
        return 0
    if not 0 < psi_tol <= 1:
        raise DomainError(f"tolerance must lie in (0, 1], got {psi_tol}")
    return math.ceil((math.log(psi_tol) - math.log(n_ub - n_lb)) / math.log(GOLDEN)) + 1


@dataclass
class SearchTrace:
    n_star: int
    iterations: int
    evaluations: int
    fallback_scan: bool


def linear_scan_largest(slack: Callable[[int], float], cap: int, start: int = 1) -> int:
    """Largest ``n <= cap`` such that ``slack`` is nonnegative for all of ``start..n``."""
    n = start - 1
    while n < cap and slack(n + 1) >= 0:
        n += 1
    return n


def golden_section_largest(slack: Callable[[int], float], n_lb: int, n_ub: int, cap: int) -> SearchTrace:
    """Largest ``n`` with ``slack(n) >= 0``, for slack decreasing in ``n``.

    Each probe is scored so that feasible points with less slack rank best
    and every infeasible point ranks behind every feasible one. That score is
    unimodal in ``n`` with its minimum at the answer, and the integer
    golden-section bracket closes on it. Ties keep the larger-``n`` side. The
    result is checked at ``n`` and ``n + 1``; a mismatch falls back to a
    linear scan.
    """
    cache: dict[int, float] = {}

    def s(n: int) -> float:
        if n <= 0:
            return math.inf
        if n not in cache:
            cache[n] = slack(n)
        return cache[n]

    def score(n: int):
        v = s(n)
        return (0, v) if v >= 0 else (1, -v)

    ub = max(0, min(n_ub, cap))
    lb = max(0, min(n_lb, ub))
    iterations = 0
    while ub > lb:
        delta = ub - lb
        p = math.floor(ub - GOLDEN * delta)
        q = math.ceil(lb + GOLDEN * delta)
        if score(p) < score(q):
            ub = q - 1
        else:
            lb = p + 1
        iterations += 1
    n_star = lb
    fallback = False
    if s(n_star) < 0:
        fallback = True
        while n_star > 0 and s(n_star) < 0:
            n_star -= 1
    elif n_star < cap and s(n_star + 1) >= 0:
        fallback = True
        while n_star < cap and s(n_star + 1) >= 0:
            n_star += 1
    if fallback:
        log.warning("search bracket [%d, %d] missed the answer; linear scan gave N*=%d", n_lb, n_ub, n_star)
    return SearchTrace(n_star, iterations, len(cache), fallback)


def _finish(alloc: Allocation, trace: SearchTrace, n_lb: int, n_ub: int) -> Allocation:
    return Allocation(
        alloc.n_served, alloc.powers, alloc.times, alloc.energies, alloc.dual_gamma,
        alloc.power_slack, alloc.time_slack, alloc.feasible, alloc.scheme,
        n_lb=n_lb, n_ub=n_ub, iterations=trace.iterations,
        evaluations=trace.evaluations, fallback_scan=trace.fallback_scan,
    )


def _bracket(params, profiles, power=None, tau=None, bracket=None) -> tuple[int, int]:
    if bracket is not None:
        return bracket
    return n_lower(params, profiles, power, tau), n_upper(params, profiles, power, tau)


def plan_from_vs(profiles: Sequence[UserProfile], vs: Sequence[float], params: SystemParams,
                 bracket: tuple[int, int] | None = None, scheme: str = "joint") -> Allocation:
    """Joint power/time plan for users admitted in index order.

    ``vs`` holds one constant per candidate user; any per-user constant with
    the meaning "power per unit of ``2^(eta/tau) - 1``" works.
    """
    vs = np.asarray(vs, dtype=float)
    cap = len(vs)
    n_lb, n_ub = _bracket(params, profiles, bracket=bracket)
    solved: dict[int, Allocation] = {}

    def solve(n: int) -> Allocation:
        if n not in solved:
            solved[n] = solve_p3(profiles[:n], vs[:n], params, scheme)
        return solved[n]

    trace = golden_section_largest(lambda n: solve(n).power_slack, n_lb, n_ub, cap)
    log.info("%s: bracket [%d, %d], N*=%d after %d iterations", scheme, n_lb, n_ub, trace.n_star, trace.iterations)
    if trace.n_star == 0:
        return _finish(_empty(params, scheme), trace, n_lb, n_ub)
    return _finish(solve(trace.n_star), trace, n_lb, n_ub)


def _profiles(model: HeterogeneityModel, profiles):
    return list(profiles) if profiles is not None else make_profiles(model)


def joint_optimize(params: SystemParams, model: HeterogeneityModel, mode: str = "general",
                   profiles: Sequence[UserProfile] | None = None,
                   bracket: tuple[int, int] | None = None) -> Allocation:
    """Serve as many users as possible with jointly optimised power and time.

    Users are admitted in index order from ``profiles`` (by default the
    model's full candidate population).
    """
    profiles = _profiles(model, profiles)
    return plan_from_vs(profiles, compute_vs(profiles, params, mode), params, bracket, "joint")


def ota_optimize(params: SystemParams, model: HeterogeneityModel,
                 fixed_powers: Sequence[float] | None = None, mode: str = "general",
                 profiles: Sequence[UserProfile] | None = None,
                 bracket: tuple[int, int] | None = None) -> Allocation:
    """Optimal time shares for given powers.

    ``fixed_powers=None`` gives every admitted user ``P_t/N``; explicit
    powers are per-user sources and only the time budget applies.
    """
    profiles = _profiles(model, profiles)
    vs = compute_vs(profiles, params, mode)
    etas = np.array([u.rate_threshold for u in profiles])
    cap = len(profiles)
    if fixed_powers is None:
        def powers(n):
            return np.full(n, params.p_budget / n)
        if bracket is None:
            bracket = _bracket(params, profiles)
    else:
        fixed = np.asarray(fixed_powers, dtype=float)
        if np.any(~(fixed > 0)):
            raise DomainError("fixed powers must be positive")
        cap = min(cap, len(fixed))

        def powers(n):
            return fixed[:n]
        if bracket is None:
            bracket = (n_lower(params, profiles, power=lambda n: float(fixed.min())),
                       n_upper(params, profiles, power=lambda n: float(fixed.max())))

    def times(n):
        return time_from_power(vs[:n], etas[:n], powers(n))

    trace = golden_section_largest(lambda n: 1.0 - float(np.sum(times(n))), *bracket, cap)
    n = trace.n_star
    if n == 0:
        return _finish(_empty(params, "ota"), trace, *bracket)
    alloc = _make_allocation(powers(n), times(n), params, scheme="ota",
                             feasible=fixed_powers is not None or None)
    return _finish(alloc, trace, *bracket)


def opa_optimize(params: SystemParams, model: HeterogeneityModel,
                 fixed_times: Sequence[float] | None = None, mode: str = "general",
                 profiles: Sequence[UserProfile] | None = None,
                 bracket: tuple[int, int] | None = None) -> Allocation:
    """Minimum powers for given time shares.

    ``fixed_times=None`` gives every admitted user ``1/N``. Explicit time
    shares must also fit the block.
    """
    profiles = _profiles(model, profiles)
    vs = compute_vs(profiles, params, mode)
    etas = np.array([u.rate_threshold for u in profiles])
    cap = len(profiles)
    if fixed_times is None:
        def times(n):
            return np.full(n, 1.0 / n)
        if bracket is None:
            bracket = _bracket(params, profiles)
    else:
        fixed = np.asarray(fixed_times, dtype=float)
        if np.any(~((fixed > 0) & (fixed <= 1))):
            raise DomainError("fixed times must lie in (0, 1]")
        cap = min(cap, len(fixed))

        def times(n):
            return fixed[:n]
        if bracket is None:
            bracket = (n_lower(params, profiles, tau=lambda n: float(fixed.min())),
                       n_upper(params, profiles, tau=lambda n: float(fixed.max())))

    def slack(n):
        t = times(n)
        if float(np.sum(t)) > 1.0 + 1e-12:
            return -math.inf
        return params.p_budget - float(np.sum(power_from_time(vs[:n], etas[:n], t)))

    trace = golden_section_largest(slack, *bracket, cap)
    n = trace.n_star
    if n == 0:
        return _finish(_empty(params, "opa"), trace, *bracket)
    t = times(n)
    alloc = _make_allocation(power_from_time(vs[:n], etas[:n], t), t, params, scheme="opa")
    return _finish(alloc, trace, *bracket)


def uniform_baseline(params: SystemParams, model: HeterogeneityModel, mode: str = "general",
                     profiles: Sequence[UserProfile] | None = None,
                     bracket: tuple[int, int] | None = None) -> Allocation:
    """Equal power ``P_t/N`` and equal time ``1/N`` for every admitted user."""
    profiles = _profiles(model, profiles)
    vs = compute_vs(profiles, params, mode)
    etas = np.array([u.rate_threshold for u in profiles])
    if bracket is None:
        bracket = _bracket(params, profiles)

    def slack(n):
        need = power_from_time(vs[:n], etas[:n], np.full(n, 1.0 / n))
        return params.p_budget / n - float(np.max(need))

    trace = golden_section_largest(slack, *bracket, len(profiles))
    n = trace.n_star
    if n == 0:
        return _finish(_empty(params, "uniform"), trace, *bracket)
    alloc = _make_allocation(np.full(n, params.p_budget / n), np.full(n, 1.0 / n), params, scheme="uniform")
    return _finish(alloc, trace, *bracket)


def independent_power_plan(profiles: Sequence[UserProfile], per_user_pmax: Sequence[float],
                           params: SystemParams, mode: str = "general") -> Allocation:
    """Users with their own power sources transmit at full power.

    Each admitted user needs ``eta / log2(1 + P_max/V)`` of the block; users
    join in index order while the shares still fit.
    """
    caps = np.asarray(per_user_pmax, dtype=float)
    if np.any(~(caps > 0)):
        raise DomainError("power caps must be positive")
    n_cand = min(len(profiles), len(caps))
    vs = compute_vs(profiles[:n_cand], params, mode)
    etas = np.array([u.rate_threshold for u in profiles[:n_cand]])
    taus = time_from_power(vs, etas, caps[:n_cand])
    n = int(np.searchsorted(np.cumsum(taus), 1.0, side="right"))
    if n == 0:
        return _empty(params, "independent")
    return _make_allocation(caps[:n], taus[:n], params, scheme="independent", feasible=True)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def _multiplier_ratios(user: UserProfile, p: float, tau: float, params: SystemParams) -> tuple[float, float]:
    """Coverage sensitivities ``d pcov/dP`` and ``d pcov/dtau``.

    At a KKT point of the unrelaxed problem these equal ``nu1/lambda_i`` and
    ``nu2/lambda_i``. Both are integrals of the Rician density at the SNR
    threshold over the user distance.
    """
    k = user.rice_k
    a = math.sqrt(2.0 * k)
    eta = user.rate_threshold
    x = LN2 * eta / tau
    w1 = math.expm1(x)
    scale = 2.0 * (k + 1.0) * w1 * params.noise_power / (user.mean_gain_param * p)
    alpha, h, dmax, L = params.pathloss_exp, params.uav_altitude, params.d_max, params.cell_radius

    def density(d):
        b2 = scale * d**alpha
        b = np.sqrt(b2)
        # b^2 I0(ab) exp(-(a^2+b^2)/2) written with the scaled Bessel function
        return b2 * bessel_i0e(a * b) * np.exp(-0.5 * (a - b) ** 2) * 2.0 * d / (L * L)

    base, _ = integrate(density, h, dmax, rel_tol=1e-8, abs_tol=1e-14)
    d_power = base / (2.0 * p)
    d_tau = base * x / (2.0 * tau) * math.exp(x) / w1
    return d_power, d_tau


def kkt_residuals(alloc: Allocation, profiles: Sequence[UserProfile], params: SystemParams,
                  mode: str = "general", vs: Sequence[float] | None = None,
                  multipliers: bool = True) -> KktReport:
    """Residual diagnostics for a fixed-N allocation.

    Coverage slack uses the closed-form coverage, stationarity uses the
    relaxed energy problem, and the multiplier ratios come from the exact
    coverage derivatives.
    """
    n = alloc.n_served
    if n < 1:
        raise DomainError("allocation is empty")
    users = list(profiles[:n])
    if vs is None:
        vs = compute_vs(users, params, mode)
    vs = np.asarray(vs[:n], dtype=float)
    etas = np.array([u.rate_threshold for u in users])
    slack = np.array([pcov_closed(u, p, t, params) - u.cov_threshold
                      for u, p, t in zip(users, alloc.powers, alloc.times)])
    resid = stationarity_residual(alloc.times, alloc.dual_gamma, vs, etas)
    if multipliers:
        ratios = np.array([_multiplier_ratios(u, p, t, params)
                           for u, p, t in zip(users, alloc.powers, alloc.times)])
        power_ratio, time_ratio = ratios[:, 0], ratios[:, 1]
    else:
        power_ratio = time_ratio = np.zeros(0)
    return KktReport(
        coverage_slack=slack,
        stationarity_residual=np.asarray(resid, dtype=float),
        time_residual=alloc.sum_tau - 1.0,
        power_residual=alloc.sum_power - params.p_budget,
        power_multiplier_ratio=power_ratio,
        time_multiplier_ratio=time_ratio,
    )
