import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from skycell.coverage import (
    coeffs_for,
    coverage_report,
    high_snr_load,
    pcov_closed,
    pcov_dominant_los,
    pcov_exact,
    pcov_high_snr,
    pcov_jensen,
    pcov_monte_carlo,
    pcov_rayleigh,
    rician_power_samples,
)
from skycell.errors import DomainError
from skycell.geometry import SystemParams
from skycell.profiles import UserProfile
from skycell.specfun import ApproxCoeffs

PARAMS = SystemParams()
USER = UserProfile(index=1, rate_threshold=0.1, cov_threshold=0.99, mean_gain_param=1e-2, rice_k=2.0)


def scipy_pcov(user, p, tau, params):
    """Coverage integral built on scipy's noncentral chi-square tail."""
    k = user.rice_k
    scale = 2 * (k + 1) * (2 ** (user.rate_threshold / tau) - 1) * params.noise_power / (user.mean_gain_param * p)
    f = lambda d: stats.ncx2.sf(scale * d**params.pathloss_exp, 2, 2 * k) * 2 * d / params.cell_radius**2
    return integrate.quad(f, params.uav_altitude, params.d_max, epsabs=1e-13, epsrel=1e-11, limit=200)[0]


def approx_integral(user, p, tau, params, coeffs):
    """The closed form's integrand, integrated numerically over distance."""
    k = user.rice_k
    scale = 2 * (k + 1) * (2 ** (user.rate_threshold / tau) - 1) * params.noise_power / (user.mean_gain_param * p)
    f = lambda d: math.exp(-math.exp(coeffs.phi) * (scale * d**params.pathloss_exp) ** (coeffs.psi / 2)) \
        * 2 * d / params.cell_radius**2
    return integrate.quad(f, params.uav_altitude, params.d_max, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


# --- exact -----------------------------------------------------------------

def test_exact_vanishing_rate():
    assert pcov_exact(USER.with_(rate_threshold=1e-12), 0.1, 0.1, PARAMS) == pytest.approx(1.0, abs=1e-9)


def test_exact_vanishing_power():
    assert pcov_exact(USER, 1e-15, 0.1, PARAMS) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("k", [0.0, 2.0, 10.0, 60.0])
@pytest.mark.parametrize("p", [3e-3, 0.01, 0.1, 1.0])
def test_exact_matches_scipy_oracle(k, p):
    user = USER.with_(rice_k=k)
    assert pcov_exact(user, p, 0.1, PARAMS) == pytest.approx(scipy_pcov(user, p, 0.1, PARAMS), abs=1e-9)


def test_exact_matches_monte_carlo_at_defaults():
    mc, se = pcov_monte_carlo(USER, 0.1, 0.1, PARAMS, trials=100_000, seed=2)
    assert abs(pcov_exact(USER, 0.1, 0.1, PARAMS) - mc) <= 3 * se


@pytest.mark.parametrize("p,tau", [(0.0, 0.1), (0.1, 0.0), (0.1, 1.5), (-1.0, 0.5)])
def test_resource_domain(p, tau):
    with pytest.raises(DomainError):
        pcov_exact(USER, p, tau, PARAMS)


# --- closed form -----------------------------------------------------------

def test_closed_close_to_exact_at_defaults():
    assert abs(pcov_closed(USER, 0.1, 0.1, PARAMS) - pcov_exact(USER, 0.1, 0.1, PARAMS)) <= 0.02


@pytest.mark.parametrize("k", [0.0, 1.0, 2.0, 10.0, 1000.0])
@pytest.mark.parametrize("p", [1e-3, 5e-3, 0.02, 0.3, 5.0])
def test_closed_form_matches_its_integral(k, p):
    user = USER.with_(rice_k=k)
    c = coeffs_for(user)
    assert pcov_closed(user, p, 0.1, PARAMS, c) == pytest.approx(approx_integral(user, p, 0.1, PARAMS, c), abs=1e-10)


def test_closed_rayleigh_equivalence():
    user = USER.with_(rice_k=0.0)
    c = ApproxCoeffs(a=0.0, phi=math.log(0.5), psi=2.0)
    for p in np.logspace(-4, 1, 20):
        assert pcov_closed(user, p, 0.1, PARAMS, c) == pytest.approx(pcov_rayleigh(user, p, 0.1, PARAMS), abs=1e-9)


def test_closed_vanishing_rate():
    assert pcov_closed(USER.with_(rate_threshold=1e-12), 0.1, 0.1, PARAMS) == pytest.approx(1.0, abs=1e-9)


def test_closed_extreme_inputs_stay_in_range():
    for p in (1e-30, 1e-15, 1e10, 1e30):
        for tau in (1e-3, 1.0):
            v = pcov_closed(USER, p, tau, PARAMS)
            assert 0.0 <= v <= 1.0


# --- high SNR --------------------------------------------------------------

def test_high_snr_regime_accuracy():
    checked = 0
    for p in np.logspace(-2, 3, 40):
        if high_snr_load(USER, p, 0.1, PARAMS) <= 0.05:
            assert abs(pcov_high_snr(USER, p, 0.1, PARAMS) - pcov_exact(USER, p, 0.1, PARAMS)) <= 0.01
            checked += 1
    assert checked > 10


def test_high_snr_huge_power():
    assert pcov_high_snr(USER, 1e6, 0.1, PARAMS) == pytest.approx(1.0, abs=1e-9)


def test_high_snr_fails_outside_regime():
    log_p = optimize.brentq(lambda lp: high_snr_load(USER, math.exp(lp), 0.1, PARAMS) - 0.5, -12, 5)
    p = math.exp(log_p)
    assert abs(pcov_high_snr(USER, p, 0.1, PARAMS) - pcov_exact(USER, p, 0.1, PARAMS)) > 0.01


# --- dominant LoS ----------------------------------------------------------

def test_dominant_los_full_and_empty():
    assert pcov_dominant_los(USER, 10.0, 1.0, PARAMS) == 1.0
    assert pcov_dominant_los(USER, 1e-6, 0.1, PARAMS) == 0.0


def test_dominant_los_threshold_formula():
    p, tau = 7e-3, 0.1
    d_th = (p * USER.mean_gain_param / ((2 ** (USER.rate_threshold / tau) - 1) * PARAMS.noise_power)) ** (1 / 3)
    expected = (d_th**2 - 400.0**2) / 200.0**2
    assert 0 < expected < 1
    assert pcov_dominant_los(USER, p, tau, PARAMS) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("p", [0.1, 5e-3, 7e-3, 8e-3, 0.02])
def test_dominant_los_high_k(p):
    user = USER.with_(rice_k=1000.0)
    assert abs(pcov_dominant_los(user, p, 0.1, PARAMS) - pcov_exact(user, p, 0.1, PARAMS)) <= 0.02


def test_dominant_los_smears_at_transition_edge():
    # Finite K leaves a few percent of power fluctuation, which rounds the step.
    user = USER.with_(rice_k=1000.0)
    assert abs(pcov_dominant_los(user, 6.5e-3, 0.1, PARAMS) - pcov_exact(user, 6.5e-3, 0.1, PARAMS)) > 0.02


# --- Rayleigh --------------------------------------------------------------

def test_rayleigh_vanishing_rate():
    assert pcov_rayleigh(USER.with_(rate_threshold=1e-12), 0.1, 0.1, PARAMS) == pytest.approx(1.0, abs=1e-9)


def test_rayleigh_matches_monte_carlo():
    user = USER.with_(rice_k=0.0)
    mc, se = pcov_monte_carlo(user, 0.1, 0.1, PARAMS, trials=100_000, seed=4)
    assert abs(pcov_rayleigh(user, 0.1, 0.1, PARAMS) - mc) <= 3 * se


def test_rayleigh_matches_exact_integral():
    user = USER.with_(rice_k=0.0)
    for p in (1e-3, 0.01, 0.1):
        assert pcov_rayleigh(user, p, 0.1, PARAMS) == pytest.approx(pcov_exact(user, p, 0.1, PARAMS), abs=1e-9)


# --- Monte Carlo -----------------------------------------------------------

def test_rician_power_unit_mean():
    w = rician_power_samples(2.0, 1_000_000, np.random.default_rng(0))
    assert abs(w.mean() - 1.0) <= 3 * w.std(ddof=1) / math.sqrt(len(w))


def test_rayleigh_power_is_exponential():
    w = rician_power_samples(0.0, 100_000, np.random.default_rng(1))
    assert stats.kstest(w, "expon").statistic < 0.01


def test_monte_carlo_independent_of_workers():
    a = pcov_monte_carlo(USER, 0.02, 0.1, PARAMS, trials=100_000, seed=9, workers=1)
    b = pcov_monte_carlo(USER, 0.02, 0.1, PARAMS, trials=100_000, seed=9, workers=3)
    assert a == b


def test_monte_carlo_needs_trials():
    with pytest.raises(DomainError):
        pcov_monte_carlo(USER, 0.1, 0.1, PARAMS, trials=10)


def test_report_fields():
    r = coverage_report(USER, 0.05, 0.1, PARAMS, mc_trials=5000, seed=1)
    for v in (r.exact, r.closed_form, r.high_snr, r.dominant_los, r.rayleigh, r.monte_carlo):
        assert 0.0 <= v <= 1.0
    assert r.mc_trials == 5000 and r.mc_stderr > 0


# --- properties ------------------------------------------------------------

FAST = [
    lambda u, p, t, prm: pcov_closed(u, p, t, prm),
    lambda u, p, t, prm: pcov_high_snr(u, p, t, prm),
    lambda u, p, t, prm: pcov_dominant_los(u, p, t, prm),
    lambda u, p, t, prm: pcov_rayleigh(u, p, t, prm),
    lambda u, p, t, prm: pcov_jensen(u, p, t, prm),
]

powers = st.floats(1e-4, 10.0)
taus = st.floats(0.01, 1.0)


@given(powers, powers, taus, st.sampled_from(range(len(FAST))))
def test_monotone_in_power(p1, p2, tau, which):
    lo, hi = sorted((p1, p2))
    f = FAST[which]
    assert f(USER, lo, tau, PARAMS) <= f(USER, hi, tau, PARAMS) + 1e-12


@given(powers, taus, taus, st.sampled_from(range(len(FAST))))
def test_monotone_in_tau(p, t1, t2, which):
    lo, hi = sorted((t1, t2))
    f = FAST[which]
    assert f(USER, p, lo, PARAMS) <= f(USER, p, hi, PARAMS) + 1e-12


@given(powers, st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.sampled_from(range(len(FAST))))
def test_nonincreasing_in_rate(p, e1, e2, which):
    lo, hi = sorted((e1, e2))
    f = FAST[which]
    assert f(USER.with_(rate_threshold=lo), p, 0.2, PARAMS) >= f(USER.with_(rate_threshold=hi), p, 0.2, PARAMS) - 1e-12


@given(powers, st.sampled_from(["uav_altitude", "cell_radius", "pathloss_exp"]),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.sampled_from(range(len(FAST))))
def test_nonincreasing_in_geometry(p, name, x1, x2, which):
    span = {"uav_altitude": (100.0, 1000.0), "cell_radius": (50.0, 1000.0), "pathloss_exp": (2.0, 4.0)}[name]
    lo, hi = (span[0] + v * (span[1] - span[0]) for v in sorted((x1, x2)))
    f = FAST[which]
    assert f(USER, p, 0.1, PARAMS.with_(**{name: lo})) >= f(USER, p, 0.1, PARAMS.with_(**{name: hi})) - 1e-12


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(0.02, 1.0))
def test_exact_monotone_in_power(p1, p2, tau):
    lo, hi = sorted((p1, p2))
    assert pcov_exact(USER, lo, tau, PARAMS) <= pcov_exact(USER, hi, tau, PARAMS) + 1e-9


@given(powers, taus, st.sampled_from([0.0, 1.0, 2.0, 5.0, 10.0]))
def test_jensen_direction(p, tau, k):
    user = USER.with_(rice_k=k)
    assert pcov_closed(user, p, tau, PARAMS) >= pcov_jensen(user, p, tau, PARAMS) - 1e-12


def test_log_concavity_proxy():
    rng = np.random.default_rng(5)
    f = lambda x: pcov_exact(USER, x[0], x[1], PARAMS)
    for _ in range(100):
        p1, p2 = np.exp(rng.uniform(math.log(1e-3), 0.0, 2))
        t1, t2 = rng.uniform(0.02, 1.0, 2)
        for a, b in (((p1, t1), (p2, t1)), ((p1, t1), (p1, t2)), ((p1, t1), (p2, t2))):
            fa, fb = f(a), f(b)
            if min(fa, fb) <= 0:
                continue
            fm = f(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
            assert math.log(fm) >= 0.5 * (math.log(fa) + math.log(fb)) - 1e-6
