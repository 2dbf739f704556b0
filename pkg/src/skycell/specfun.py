"""Special functions used by the coverage analysis.

Everything here is implemented directly on top of numpy; scipy is used only
for the Nelder-Mead search inside :func:`fit_q1_coeffs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import ApproximationError, DomainError, NumericError
from .quadrature import integrate

__all__ = [
    "ApproxCoeffs",
    "bessel_i0",
    "bessel_i0e",
    "fit_q1_coeffs",
    "lambert_w0",
    "lower_gamma_scaled",
    "marcum_q1",
    "q1_approx",
    "upper_gamma_cf_scaled",
    "upper_incomplete_gamma",
    "w0_plus_one",
]

_E = math.e
_INV_E = math.exp(-1.0)

# Poisson-mixture series for Q1 is used when a**2/2 <= 50 and b**2/2 <= 72.
_SERIES_A_MAX = 10.0
_SERIES_B_MAX = 12.0
# Beyond this argument I0 switches from the power series to the asymptotic form.
_I0_SERIES_MAX = 30.0


def _check_real(name: str, value, lower: float = 0.0) -> None:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    if np.any(arr < lower):
        raise DomainError(f"{name} must be >= {lower}, got {value!r}")


# ---------------------------------------------------------------------------
# Modified Bessel function I0
# ---------------------------------------------------------------------------

def _i0_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 110):
        term = term * q / (k * k)
        total = total + term
    return total


def _i0e_series(x: np.ndarray) -> np.ndarray:
    return _i0_series(x) * np.exp(-x)


def _i0e_asymptotic(x: np.ndarray) -> np.ndarray:
    # e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 31):
        term = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        total = total + term
    return total / np.sqrt(2.0 * np.pi * x)


def bessel_i0e(x):
    """Exponentially scaled I0, ``exp(-x) * I0(x)``, for ``x >= 0``."""
    _check_real("x", x)
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    small = arr <= _I0_SERIES_MAX
    out[small] = _i0e_series(arr[small])
    out[~small] = _i0e_asymptotic(arr[~small])
    return float(out) if out.ndim == 0 else out


def bessel_i0(x):
    """Zeroth-order modified Bessel function of the first kind.

    Power series up to ``x = 30`` and a scaled asymptotic expansion above.
    Raises :class:`NumericError` when the result overflows a double.
    """
    _check_real("x", x)
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    small = arr <= _I0_SERIES_MAX
    out[small] = _i0_series(arr[small])
    with np.errstate(over="ignore"):
        out[~small] = _i0e_asymptotic(arr[~small]) * np.exp(arr[~small])
    if not np.all(np.isfinite(out)):
        raise NumericError(f"I0({x!r}) overflows")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Incomplete gamma
# ---------------------------------------------------------------------------

def lower_gamma_scaled(s: float, x: float) -> float:
    """Return ``gamma(s, x) / x**s`` via the convergent power series.

    Accurate for ``x <= s + 1``; usable beyond but slower.
    """
    term = 1.0 / s
    total = term
    n = 0
    while True:
        n += 1
        term *= x / (s + n)
        total += term
        if abs(term) < abs(total) * 1e-17 or n > 10_000:
            break
    return math.exp(-x) * total


def upper_gamma_cf_scaled(s: float, x: float) -> float:
    """Return ``Gamma(s, x) * exp(x) / x**s`` by Lentz's continued fraction.

    Valid for ``x >= s + 1`` (where the fraction converges quickly).
    """
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise NumericError(f"incomplete gamma continued fraction failed for s={s}, x={x}")


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma function ``Gamma(s, x)`` for ``s > 0, x >= 0``."""
    _check_real("x", x)
    if not (math.isfinite(s) and s > 0):
        raise DomainError(f"s must be a positive finite real, got {s!r}")
    s = float(s)
    x = float(x)
    if x == 0.0:
        return math.gamma(s)
    if x < s + 1.0:
        return math.gamma(s) - x**s * lower_gamma_scaled(s, x)
    return math.exp(-x + s * math.log(x)) * upper_gamma_cf_scaled(s, x)


# ---------------------------------------------------------------------------
# Lambert W, principal branch
# ---------------------------------------------------------------------------

def _h_of_u(u: np.ndarray) -> np.ndarray:
    """(u - 1) e^u + 1, with a series where the closed form cancels."""
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small]
    term = us * us / 2.0
    total = term.copy()
    for k in range(3, 30):
        term = term * us / k
        total = total + (k - 1) * term
    out[small] = total
    ub = u[~small]
    out[~small] = (ub - 1.0) * np.exp(ub) + 1.0
    return out


def w0_plus_one(r):
    """Return ``W0(-(1 - r)/e) + 1`` for ``r >= 0``.

    Working in the offset ``r = 1 + e*x`` keeps full relative precision next
    to the branch point, where ``W0 + 1 ~ sqrt(2 r)``. Solves
    ``(u - 1) e^u + 1 = r`` for ``u >= 0`` by Halley iteration.
    """
    rr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(rr)) or np.any(rr < 0):
        raise DomainError("offset must be finite and >= 0 (argument below -1/e)")
    scalar = rr.ndim == 0
    rr = np.atleast_1d(rr)

    # Branch-point series for small offsets, log-based guess otherwise.
    p = np.sqrt(2.0 * rr)
    u = p - p**2 / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4 + 769.0 / 17280.0 * p**5
    far = rr > 0.3
    if np.any(far):
        x = (rr[far] - 1.0) / _E
        lx = np.log1p(x)
        w = lx * (1.0 - np.log1p(lx) / (2.0 + lx))
        big = x > 3.0
        l1 = np.log(x[big])
        l2 = np.log(l1)
        w[big] = l1 - l2 + l2 / l1
        u[far] = w + 1.0

    active = rr > 0
    u = np.where(active, u, 0.0)
    for _ in range(60):
        if not np.any(active):
            break
        ua = u[active]
        eu = np.exp(ua)
        f = _h_of_u(ua) - rr[active]
        f1 = ua * eu
        f2 = (ua + 1.0) * eu
        step = f / (f1 - 0.5 * f * f2 / f1)
        unew = ua - step
        # Halley can overshoot below zero from a poor guess; bisect back instead.
        unew = np.where(unew <= 0, 0.5 * ua, unew)
        u[active] = unew
        # Halley is cubic: once a step is this small the iterate sits at roundoff.
        done = np.abs(unew - ua) <= 1e-13 * np.maximum(unew, 1e-300)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    else:
        raise NumericError("Lambert W iteration did not converge")
    return float(u[0]) if scalar else u


def lambert_w0(x):
    """Principal branch of the Lambert W function, ``w e^w = x``, ``x >= -1/e``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise DomainError("Lambert W argument must be finite")
    if np.any(arr < -_INV_E):
        raise DomainError(f"Lambert W0 undefined below -1/e, got {x!r}")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)

    near = arr < -0.25
    if np.any(near):
        out[near] = w0_plus_one(np.maximum(1.0 + _E * arr[near], 0.0)) - 1.0

    rest = ~near
    xr = arr[rest]
    lx = np.log1p(xr)
    w = lx * (1.0 - np.log1p(lx) / (2.0 + lx))
    big = xr > 3.0
    l1 = np.log(xr[big])
    l2 = np.log(l1)
    w[big] = l1 - l2 + l2 / l1
    for _ in range(60):
        ew = np.exp(w)
        f = w * ew - xr
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w = w - step
        if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(w))):
            break
    out[rest] = w
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Marcum Q1
# ---------------------------------------------------------------------------

def _q1_series(a: float, b: np.ndarray) -> np.ndarray:
    """Poisson mixture: Q1(a,b) = sum_j Pois(j; a^2/2) P[Pois(b^2/2) <= j].

    For ``b < a`` the complement is summed instead, with Poisson survival
    terms, so values close to 1 keep full precision.
    """
    lam = 0.5 * a * a
    mu = 0.5 * b * b
    jmax = int(math.ceil(lam + 12.0 * math.sqrt(lam) + 40.0))
    kmax = max(jmax, int(math.ceil(mu.max() + 12.0 * math.sqrt(mu.max()) + 40.0))) + 1
    j = np.arange(jmax)
    k = np.arange(kmax)
    lgam = np.array([math.lgamma(i + 1.0) for i in range(kmax)])
    if lam > 0:
        weights = np.exp(-lam + j * math.log(lam) - lgam[:jmax])
    else:
        weights = (j == 0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mu = np.log(mu)
        log_pmf = -mu[:, None] + k[None, :] * log_mu[:, None] - lgam[None, :]
    log_pmf[:, 0] = -mu
    pmf = np.exp(log_pmf)
    upper = b >= a
    out = np.empty_like(b)
    if np.any(upper):
        cdf = np.cumsum(pmf[upper, :jmax], axis=1)
        out[upper] = cdf @ weights
    if np.any(~upper):
        # sf_j = sum_{k > j} pmf_k, accumulated from the far tail inward
        tail = np.cumsum(pmf[~upper, ::-1], axis=1)[:, ::-1]
        out[~upper] = 1.0 - tail[:, 1:jmax + 1] @ weights
    return np.clip(out, 0.0, 1.0)


def _q1_density(a: float):
    def f(x):
        return x * np.exp(-0.5 * (x - a) ** 2) * bessel_i0e(a * x)
    return f


def _q1_integral(a: float, b: float) -> float:
    """Integrate the Rician envelope density (noncentral chi-square, 2 DOF)."""
    f = _q1_density(a)
    if b >= a:
        upper = b + 40.0
        val, _ = integrate(f, b, upper, rel_tol=1e-13, abs_tol=1e-300)
        return min(max(val, 0.0), 1.0)
    bps = (a,) if 0.0 < a < b else ()
    val, _ = integrate(f, 0.0, b, rel_tol=1e-13, abs_tol=1e-300, breakpoints=bps)
    return min(max(1.0 - val, 0.0), 1.0)


def _marcum_q1_unchecked(a: float, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    if a == 0.0:
        with np.errstate(over="ignore"):
            return np.exp(-0.5 * b * b)
    trivial_one = b == 0.0
    trivial_zero = np.isinf(b) | (b - a > 40.0)
    out[trivial_one] = 1.0
    out[trivial_zero] = 0.0
    rest = ~(trivial_one | trivial_zero)
    series = rest & (b <= _SERIES_B_MAX) & (a <= _SERIES_A_MAX)
    if np.any(series):
        out[series] = _q1_series(a, b[series])
    for i in np.flatnonzero(rest & ~series):
        out[i] = _q1_integral(a, float(b[i]))
    return out


def marcum_q1(a: float, b):
    """First-order Marcum Q-function ``Q1(a, b)``.

    ``b`` may be a scalar or an array. Small arguments use the Poisson-mixture
    series; large ones integrate the noncentral chi-square tail with
    exponentially scaled I0, so the function stays accurate for ``a`` up to a
    few hundred.
    """
    _check_real("a", a)
    _check_real("b", b)
    barr = np.asarray(b, dtype=float)
    out = _marcum_q1_unchecked(float(a), np.atleast_1d(barr))
    return float(out[0]) if barr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Exponential-type approximation Q1(a, b) ~ exp(-e^phi b^psi)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApproxCoeffs:
    """Coefficients of ``Q1(a, b) ~ exp(-exp(phi) * b**psi)``.

    ``max_error`` is the largest absolute deviation seen on the fitting grid.
    """

    a: float
    phi: float
    psi: float
    max_error: float = 0.0

    def __post_init__(self):
        if not self.psi > 0:
            raise DomainError(f"psi must be positive, got {self.psi}")
        if self.a < 0:
            raise DomainError(f"a must be nonnegative, got {self.a}")


def q1_approx(coeffs: ApproxCoeffs, b):
    """Evaluate the fitted exponential approximation at ``b``."""
    barr = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        expo = np.exp(coeffs.phi + coeffs.psi * np.log(barr))
    out = np.exp(-expo)
    return float(out) if out.ndim == 0 else out


FIT_GRID_POINTS = 400
FIT_REJECT_ERROR = 0.05


def fit_grid(a: float) -> np.ndarray:
    """``b`` grid used for fitting.

    Log-spaced over [0.01, 10], stretched to ``a + 10``, plus a dense linear
    band ``a +/- 8`` so the fit always resolves the region where Q1 drops
    from 1 to 0.
    """
    upper = max(10.0, a + 10.0)
    log_part = np.logspace(-2.0, math.log10(upper), FIT_GRID_POINTS)
    band = np.linspace(max(a - 8.0, 0.01), a + 8.0, FIT_GRID_POINTS)
    return np.unique(np.concatenate([log_part, band]))


@lru_cache(maxsize=256)
def _fit_cached(a: float) -> ApproxCoeffs:
    if a == 0.0:
        return ApproxCoeffs(a=0.0, phi=math.log(0.5), psi=2.0, max_error=0.0)
    grid = fit_grid(a)
    target = _marcum_q1_unchecked(a, grid)
    log_b = np.log(grid)

    def max_err(x):
        with np.errstate(over="ignore"):
            return float(np.max(np.abs(target - np.exp(-np.exp(x[0] + x[1] * log_b)))))

    # The median of Q1(a, .) sits near sqrt(a^2 + 2 ln 2); seed the exponent
    # so the approximation crosses 1/2 there, for a ladder of steepnesses.
    median = math.sqrt(a * a + 2.0 * math.log(2.0))
    best = None
    for steep in (2.0, 3.0, 4.0, 6.0, 10.0, 20.0, 40.0, 80.0, 160.0):
        start = (math.log(math.log(2.0)) - steep * math.log(median), steep)
        res = optimize.minimize(
            max_err, start, method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20_000},
        )
        if res.x[1] > 0 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise ApproximationError(f"no admissible fit for a={a}")
    if best.fun > FIT_REJECT_ERROR:
        raise ApproximationError(
            f"exponential approximation error {best.fun:.3f} exceeds {FIT_REJECT_ERROR} at a={a}"
        )
    return ApproxCoeffs(a=a, phi=float(best.x[0]), psi=float(best.x[1]), max_error=float(best.fun))


def fit_q1_coeffs(a: float) -> ApproxCoeffs:
    """Fit ``(phi, psi)`` so that ``exp(-e^phi b^psi)`` tracks ``Q1(a, b)``.

    The fit minimises the maximum absolute error over :func:`fit_grid`.
    ``a = 0`` returns the exact Rayleigh pair ``(ln 0.5, 2)``. Results are
    cached per ``a``.

    Raises
    ------
    DomainError
        If ``a`` is outside ``[0, 130]``.
    ApproximationError
        If the best achievable error exceeds 0.05.
    """
    _check_real("a", a)
    if a > 130.0:
        raise DomainError(f"a must be <= 130, got {a}")
    return _fit_cached(float(a))
