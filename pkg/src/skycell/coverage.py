"""Rate-coverage probability of a single user.

Every estimator answers the same question: with transmit power ``p`` and a
fraction ``tau`` of the block, how likely is the user (placed uniformly in the
cell, seen through Rician fading) to reach its spectral-efficiency target?
The user is covered when ``tau * log2(1 + p*g/sigma^2) >= eta`` with
``g = mu * w / d**alpha`` and ``E[w] = 1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericError
from .geometry import SystemParams, sample_distances
from .profiles import UserProfile
from .quadrature import integrate
from .specfun import (
    ApproxCoeffs,
    _marcum_q1_unchecked,
    fit_q1_coeffs,
    lower_gamma_scaled,
    upper_gamma_cf_scaled,
)

__all__ = [
    "CoverageReport",
    "coeffs_for",
    "coverage_report",
    "high_snr_load",
    "jensen_bound",
    "log_rate_gap",
    "pcov_closed",
    "pcov_dominant_los",
    "pcov_exact",
    "pcov_high_snr",
    "pcov_jensen",
    "pcov_monte_carlo",
    "pcov_rayleigh",
    "rician_power_samples",
]

MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class CoverageReport:
    exact: float
    closed_form: float
    high_snr: Optional[float] = None
    dominant_los: Optional[float] = None
    rayleigh: Optional[float] = None
    monte_carlo: Optional[float] = None
    mc_trials: int = 0
    mc_stderr: float = 0.0


def _check_resources(p: float, tau: float) -> None:
    if not (math.isfinite(p) and p > 0):
        raise DomainError(f"power must be positive and finite, got {p}")
    if not (0 < tau <= 1):
        raise DomainError(f"tau must lie in (0, 1], got {tau}")


def log_rate_gap(eta: float, tau: float) -> float:
    """``log(2**(eta/tau) - 1)`` without overflow for large ``eta/tau``."""
    t = eta * math.log(2.0) / tau
    if t > 30.0:
        return t + math.log1p(-math.exp(-t))
    return math.log(math.expm1(t))


def coeffs_for(user: UserProfile) -> ApproxCoeffs:
    """Fitted Marcum approximation for the user's Rice factor."""
    return fit_q1_coeffs(math.sqrt(2.0 * user.rice_k))


def _log_snr_scale(user: UserProfile, p: float, tau: float, params: SystemParams) -> float:
    """``log((2^(eta/tau)-1) sigma^2 / (mu p))``: the SNR target per unit path gain."""
    return (log_rate_gap(user.rate_threshold, tau) + math.log(params.noise_power)
            - math.log(user.mean_gain_param) - math.log(p))


# ---------------------------------------------------------------------------
# Shared radial integral
# ---------------------------------------------------------------------------

def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _scaled_lower(s: float, x: float) -> float:
    """``gamma(s, x) / x**s`` for any ``x >= 0``."""
    if x == 0.0:
        return 1.0 / s
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return lower_gamma_scaled(s, x)
    return math.exp(math.lgamma(s) - s * math.log(x)) - math.exp(-x) * upper_gamma_cf_scaled(s, x)


def _scaled_upper(s: float, x: float) -> float:
    """``Gamma(s, x) / x**s`` for ``x >= s + 1``."""
    if math.isinf(x):
        return 0.0
    return math.exp(-x) * upper_gamma_cf_scaled(s, x)


def _radial_exp_integral(log_m: float, power: float, params: SystemParams) -> float:
    """``int_h^dmax (2d/L^2) exp(-M d^power) dd`` with ``M = exp(log_m)``.

    Substituting ``x = M d^power`` turns this into incomplete gamma functions
    of order ``s = 2/power``. Using ``M^-s gamma(s, M d^c) = d^2 gamma(s,x)/x^s``
    keeps every term bounded even when ``M`` is astronomically small or large.
    """
    if not math.isfinite(log_m):
        raise NumericError(f"coverage scale is not finite (log M = {log_m})")
    s = 2.0 / power
    h, dmax, L = params.uav_altitude, params.d_max, params.cell_radius
    x_lo = _safe_exp(log_m + power * math.log(h))
    x_hi = _safe_exp(log_m + power * math.log(dmax))
    if x_lo >= s + 1.0:
        val = s * (h * h * _scaled_upper(s, x_lo) - dmax * dmax * _scaled_upper(s, x_hi)) / (L * L)
    else:
        val = s * (dmax * dmax * _scaled_lower(s, x_hi) - h * h * _scaled_lower(s, x_lo)) / (L * L)
    return min(max(val, 0.0), 1.0)


def _log_theta(power: float, params: SystemParams) -> float:
    """``log E_d[d^power]``; the mean is ``2 (dmax^q - h^q) / (L^2 q)``, ``q = power + 2``."""
    q = power + 2.0
    h, dmax, L = params.uav_altitude, params.d_max, params.cell_radius
    return (math.log(2.0 / (L * L * q)) + q * math.log(dmax)
            + math.log(-math.expm1(q * math.log(h / dmax))))


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def pcov_exact(user: UserProfile, p: float, tau: float, params: SystemParams) -> float:
    """Coverage by adaptive quadrature of the Marcum-Q integrand over distance.

    The integrand is ``Q1(sqrt(2K), b(d)) * 2d/L^2`` with
    ``b(d)^2 = 2 (K+1) (2^(eta/tau)-1) d^alpha sigma^2 / (mu p)``.

    Raises
    ------
    NumericError
        If the quadrature does not converge.
    """
    _check_resources(p, tau)
    k = user.rice_k
    a = math.sqrt(2.0 * k)
    log_b2_scale = math.log(2.0 * (k + 1.0)) + _log_snr_scale(user, p, tau, params)
    alpha = params.pathloss_exp
    h, dmax, L = params.uav_altitude, params.d_max, params.cell_radius

    def f(d):
        with np.errstate(over="ignore"):
            b = np.exp(0.5 * (log_b2_scale + alpha * np.log(d)))
        return _marcum_q1_unchecked(a, b) * 2.0 * d / (L * L)

    bps = []
    if a > 0:
        # Q1 drops from 1 to 0 around b = a; tell the integrator where.
        d_knee = math.exp((2.0 * math.log(a) - log_b2_scale) / alpha)
        if h < d_knee < dmax:
            bps.append(d_knee)
    val, _ = integrate(f, h, dmax, rel_tol=1e-8, abs_tol=1e-12, breakpoints=bps)
    return min(max(val, 0.0), 1.0)


def _log_m(user: UserProfile, p: float, tau: float, params: SystemParams, coeffs: ApproxCoeffs) -> float:
    log_b2_scale = math.log(2.0 * (user.rice_k + 1.0)) + _log_snr_scale(user, p, tau, params)
    return coeffs.phi + 0.5 * coeffs.psi * log_b2_scale


def pcov_closed(user: UserProfile, p: float, tau: float, params: SystemParams,
                coeffs: ApproxCoeffs | None = None) -> float:
    """Closed-form coverage from the exponential Marcum approximation.

    Replaces ``Q1(a, b)`` by ``exp(-e^phi b^psi)`` so the distance integral
    becomes a difference of upper incomplete gamma functions of order
    ``4/(psi alpha)``.
    """
    _check_resources(p, tau)
    if coeffs is None:
        coeffs = coeffs_for(user)
    power = 0.5 * coeffs.psi * params.pathloss_exp
    return _radial_exp_integral(_log_m(user, p, tau, params, coeffs), power, params)


def pcov_jensen(user: UserProfile, p: float, tau: float, params: SystemParams,
                coeffs: ApproxCoeffs | None = None) -> float:
    """Relaxed coverage ``exp(E_d[-e^phi b^psi])``, a lower bound on the closed form."""
    _check_resources(p, tau)
    if coeffs is None:
        coeffs = coeffs_for(user)
    power = 0.5 * coeffs.psi * params.pathloss_exp
    log_mt = _log_m(user, p, tau, params, coeffs) + _log_theta(power, params)
    return math.exp(-_safe_exp(log_mt))


jensen_bound = pcov_jensen


def high_snr_load(user: UserProfile, p: float, tau: float, params: SystemParams,
                  coeffs: ApproxCoeffs | None = None) -> float:
    """The product ``M * Theta``; the high-SNR expansion is valid when it is small."""
    if coeffs is None:
        coeffs = coeffs_for(user)
    power = 0.5 * coeffs.psi * params.pathloss_exp
    return _safe_exp(_log_m(user, p, tau, params, coeffs) + _log_theta(power, params))


def pcov_high_snr(user: UserProfile, p: float, tau: float, params: SystemParams,
                  coeffs: ApproxCoeffs | None = None) -> float:
    """First-order expansion ``1 - M Theta`` of the closed form, clipped to [0, 1]."""
    _check_resources(p, tau)
    return min(max(1.0 - high_snr_load(user, p, tau, params, coeffs), 0.0), 1.0)


def pcov_dominant_los(user: UserProfile, p: float, tau: float, params: SystemParams) -> float:
    """Coverage when fading is negligible and the gain is the constant ``mu / d^alpha``.

    The user is covered inside the radius ``d_th`` where the deterministic SNR
    meets the target.
    """
    _check_resources(p, tau)
    log_dth = -_log_snr_scale(user, p, tau, params) / params.pathloss_exp
    h, dmax, L = params.uav_altitude, params.d_max, params.cell_radius
    if log_dth >= math.log(dmax):
        return 1.0
    d_th = math.exp(log_dth)
    return min(max((d_th * d_th - h * h) / (L * L), 0.0), 1.0)


def pcov_rayleigh(user: UserProfile, p: float, tau: float, params: SystemParams) -> float:
    """Exact coverage under Rayleigh fading (exponential power gain)."""
    _check_resources(p, tau)
    return _radial_exp_integral(_log_snr_scale(user, p, tau, params), params.pathloss_exp, params)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def rician_power_samples(k: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean Rician power gains with Rice factor ``k``."""
    n1 = rng.standard_normal(n)
    n2 = rng.standard_normal(n)
    scale = 1.0 / math.sqrt(2.0 * (k + 1.0))
    return (math.sqrt(k / (k + 1.0)) + n1 * scale) ** 2 + (n2 * scale) ** 2


def _mc_chunk(args) -> int:
    user, p, tau, params, n, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    d = sample_distances(n, params, rng)
    w = rician_power_samples(user.rice_k, n, rng)
    with np.errstate(divide="ignore"):
        margin = np.log(w) - params.pathloss_exp * np.log(d)
    return int(np.count_nonzero(margin >= _log_snr_scale(user, p, tau, params)))


def pcov_monte_carlo(user: UserProfile, p: float, tau: float, params: SystemParams,
                     trials: int = 100_000, seed: int = 0, workers: int = 1) -> tuple[float, float]:
    """Simulated coverage and its binomial standard error.

    Trials are drawn in fixed-size chunks, each from its own child of
    ``SeedSequence(seed)``, so the estimate does not depend on ``workers``.
    """
    _check_resources(p, tau)
    if trials < 1000:
        raise DomainError(f"need at least 1000 trials, got {trials}")
    sizes = [MC_CHUNK] * (trials // MC_CHUNK)
    if trials % MC_CHUNK:
        sizes.append(trials % MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    tasks = [(user, p, tau, params, n, ss) for n, ss in zip(sizes, children)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(_mc_chunk, tasks))
    else:
        hits = sum(map(_mc_chunk, tasks))
    prob = hits / trials
    return prob, math.sqrt(prob * (1.0 - prob) / trials)


def coverage_report(user: UserProfile, p: float, tau: float, params: SystemParams,
                    mc_trials: int = 0, seed: int = 0, workers: int = 1) -> CoverageReport:
    """Evaluate every estimator at one operating point."""
    coeffs = coeffs_for(user)
    mc = stderr = None
    if mc_trials:
        mc, stderr = pcov_monte_carlo(user, p, tau, params, mc_trials, seed, workers)
    return CoverageReport(
        exact=pcov_exact(user, p, tau, params),
        closed_form=pcov_closed(user, p, tau, params, coeffs),
        high_snr=pcov_high_snr(user, p, tau, params, coeffs),
        dominant_los=pcov_dominant_los(user, p, tau, params),
        rayleigh=pcov_rayleigh(user, p, tau, params),
        monte_carlo=mc,
        mc_trials=mc_trials,
        mc_stderr=stderr or 0.0,
    )
