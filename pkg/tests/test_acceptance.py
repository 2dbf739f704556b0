"""End-to-end acceptance checks.

Each test prints one verdict line (collected in the terminal summary) and
fails if its criterion is not met at the stated tolerance.
"""

import itertools
import math

import numpy as np
import pytest

from skycell.a2g import A2gParams, altitude_sweep
from skycell.allocator import (
    compute_vs,
    gss_iteration_count,
    joint_optimize,
    kkt_residuals,
    opa_optimize,
    ota_optimize,
    power_from_time,
    solve_p3,
    uniform_baseline,
)
from skycell.coverage import (
    high_snr_load,
    pcov_closed,
    pcov_dominant_los,
    pcov_exact,
    pcov_high_snr,
    pcov_monte_carlo,
    pcov_rayleigh,
)
from skycell.geometry import SystemParams, dbm_to_watts
from skycell.profiles import HeterogeneityModel, make_profiles
from skycell.scenarios import SWEEP_RANGES, random_scenario, sweep_scenario
from skycell.specfun import (
    ApproxCoeffs,
    fit_q1_coeffs,
    lambert_w0,
    marcum_q1,
    q1_approx,
    upper_incomplete_gamma,
)

PARAMS = SystemParams()
MODEL = HeterogeneityModel()
SEEDS = range(1, 21)
TAU = 0.1


@pytest.fixture(scope="module")
def random_runs():
    """Joint, baseline and scan results for the 20 seeded scenarios."""
    runs = []
    for seed in SEEDS:
        params, model = random_scenario(seed)
        profiles = make_profiles(model)
        vs = compute_vs(profiles, params)
        joint = joint_optimize(params, model, profiles=profiles)
        scan = 0
        while scan < len(profiles) and solve_p3(profiles[:scan + 1], vs[:scan + 1], params).sum_power <= params.p_budget:
            scan += 1
        runs.append(dict(
            seed=seed, params=params, model=model, profiles=profiles, vs=vs, joint=joint, scan=scan,
            opa=opa_optimize(params, model, profiles=profiles).n_served,
            ota=ota_optimize(params, model, profiles=profiles).n_served,
            uniform=uniform_baseline(params, model, profiles=profiles).n_served,
        ))
    return runs


@pytest.fixture(scope="module")
def sweeps():
    """Joint and uniform served-user counts along every sweep range."""
    out = {}
    for name, values in SWEEP_RANGES.items():
        rows = []
        for v in values:
            params, model = sweep_scenario(PARAMS, MODEL, name, v)
            rows.append((joint_optimize(params, model).n_served, uniform_baseline(params, model).n_served))
        out[name] = rows
    return out


def test_criterion_01_coverage_vs_monte_carlo(criterion):
    worst, count, seed = -math.inf, 0, 100
    for eta, h in itertools.product((0.1, 0.5), (400.0, 600.0)):
        params = PARAMS.with_(uav_altitude=h)
        user = make_profiles(MODEL, 1)[0].with_(rate_threshold=eta)
        for p in np.logspace(-2, 0, 12):
            mc, se = pcov_monte_carlo(user, p, TAU, params, trials=100_000, seed=seed)
            seed += 1
            worst = max(worst, abs(pcov_closed(user, p, TAU, params) - mc) - max(0.02, 3 * se))
            count += 1
    criterion(1, "closed form vs Monte Carlo", worst <= 0,
              f"{count} points, worst excess over tolerance {worst:+.4f}")


def test_criterion_02_high_snr(criterion):
    worst, count = 0.0, 0
    base = make_profiles(MODEL, 1)[0]
    for eta, h, tau in itertools.product((0.1, 0.5), (400.0, 600.0), (0.05, 0.1, 0.5, 1.0)):
        params = PARAMS.with_(uav_altitude=h)
        user = base.with_(rate_threshold=eta)
        for p in np.logspace(-3, 3, 61):
            if high_snr_load(user, p, tau, params) <= 0.05:
                worst = max(worst, abs(pcov_high_snr(user, p, tau, params) - pcov_exact(user, p, tau, params)))
                count += 1
    criterion(2, "high-SNR form in its regime", count > 0 and worst <= 0.01,
              f"{count} points with load <= 0.05, worst deviation {worst:.4f}")


def test_criterion_03_dominant_los(criterion):
    base = make_profiles(MODEL, 1)[0].with_(rice_k=1000.0)
    worst, largest, seed = -math.inf, 0.0, 300
    for eta, h in itertools.product((0.1, 0.5), (400.0, 600.0)):
        params = PARAMS.with_(uav_altitude=h)
        user = base.with_(rate_threshold=eta)
        for p in np.logspace(-2, 0, 10):
            mc, se = pcov_monte_carlo(user, p, TAU, params, trials=100_000, seed=seed)
            seed += 1
            diff = abs(pcov_dominant_los(user, p, TAU, params) - mc)
            largest = max(largest, diff)
            worst = max(worst, diff - max(0.02, 3 * se))
    criterion(3, "dominant-LoS form at K=1000", worst <= 0,
              f"4 settings x 10 powers, largest gap {largest:.4f}, worst excess over tolerance {worst:+.4f}")


def test_criterion_04_rayleigh(criterion):
    user = make_profiles(MODEL, 1)[0].with_(rice_k=0.0)
    coeffs = fit_q1_coeffs(0.0)
    grid = list(itertools.product(np.logspace(-4, 1, 10), (0.05, 0.1, 0.2, 0.5, 1.0)))
    worst = max(abs(pcov_rayleigh(user, p, t, PARAMS) - pcov_closed(user, p, t, PARAMS, coeffs)) for p, t in grid)
    criterion(4, "Rayleigh special case", len(grid) == 50 and worst <= 1e-9, f"50 points, worst {worst:.2e}")


def test_criterion_05_headline(criterion):
    a = joint_optimize(PARAMS, MODEL)
    criterion(5, "served users at the default scenario", 8 <= a.n_served <= 12,
              f"a1={MODEL.a1:g} a2={MODEL.a2:g} N*={a.n_served}")


def _grid_energy(vs, etas, steps=41, rounds=4):
    """Vectorised simplex grid search, zoomed around the best point each round."""
    n = len(vs)
    centre, width, best = np.full(n, 1.0 / n), 1.0, math.inf
    for _ in range(rounds):
        axes = [np.linspace(max(c - width / 2, 1e-4), min(c + width / 2, 1.0), steps) for c in centre[:-1]]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n - 1)
        taus = np.column_stack([pts, 1.0 - pts.sum(1)])
        taus = taus[taus[:, -1] > 1e-4]
        with np.errstate(over="ignore"):
            e = (power_from_time(vs, etas, taus) * taus).sum(1)
        k = int(np.argmin(e))
        if e[k] < best:
            best, centre = float(e[k]), taus[k]
        width /= 8
    return best


def test_criterion_06_oracles(criterion, random_runs):
    gss_mismatch = [r["seed"] for r in random_runs if r["joint"].n_served != r["scan"]]
    worst = 0.0
    for r in random_runs:
        for n in (2, 3, 4):
            vs = r["vs"][:n]
            etas = np.array([u.rate_threshold for u in r["profiles"][:n]])
            got = solve_p3(r["profiles"][:n], vs, r["params"]).energies.sum()
            ref = _grid_energy(vs, etas)
            worst = max(worst, abs(got - ref) / ref)
    criterion(6, "search and dual solver vs oracles", not gss_mismatch and worst <= 0.01,
              f"search mismatches {gss_mismatch or 'none'}, worst energy gap {100 * worst:.3f}% at N<=4")


def test_criterion_07_ordering(criterion, random_runs, sweeps):
    bad = [r["seed"] for r in random_runs
           if not r["joint"].n_served >= max(r["opa"], r["ota"]) >= r["uniform"]]
    gains = [(j - u) / u for rows in sweeps.values() for j, u in rows if u > 0]
    mean_gain = float(np.mean(gains))
    criterion(7, "scheme ordering", not bad and mean_gain > 0,
              f"violations {bad or 'none'}, mean joint-over-uniform gain {100 * mean_gain:.1f}%")


def test_criterion_08_trends(criterion, sweeps):
    def steps(name, sign):
        n = [j for j, _ in sweeps[name]]
        return sum(1 for a, b in zip(n, n[1:]) if sign * (b - a) < 0)

    violations = {"p_budget": steps("p_budget", +1)}
    for name in ("base_rate", "uav_altitude", "cell_radius", "pathloss_exp"):
        violations[name] = steps(name, -1)
    total = sum(violations.values())
    p_trend = [j for j, _ in sweeps["p_budget"]]
    criterion(8, "monotone trends", total == 0, f"violations {violations}, N* over P_t {p_trend}")


def test_criterion_09_stationarity(criterion, random_runs):
    cases = [(PARAMS, make_profiles(MODEL), joint_optimize(PARAMS, MODEL))]
    cases += [(r["params"], r["profiles"], r["joint"]) for r in random_runs]
    worst = dict(time=0.0, power=-math.inf, stat=0.0, slack=math.inf)
    checked = 0
    for params, profiles, a in cases:
        if a.n_served == 0:
            continue
        k = kkt_residuals(a, profiles, params, multipliers=False)
        worst["time"] = max(worst["time"], abs(k.time_residual))
        worst["power"] = max(worst["power"], k.power_residual)
        worst["stat"] = max(worst["stat"], float(np.max(np.abs(k.stationarity_residual))) / a.dual_gamma)
        worst["slack"] = min(worst["slack"], float(np.min(k.coverage_slack)))
        checked += 1
    ok = worst["time"] <= 1e-10 and worst["power"] <= 1e-9 and worst["stat"] <= 1e-6 and worst["slack"] >= -1e-9
    criterion(9, "stationarity and budgets", ok and checked > 0,
              f"{checked} plans, |sum tau-1| {worst['time']:.1e}, sum P-P_t {worst['power']:+.2e}, "
              f"residual/gamma {worst['stat']:.1e}, min slack {worst['slack']:.1e}")


def test_criterion_10_bounds(criterion, random_runs):
    allocs = [joint_optimize(PARAMS, MODEL)] + [r["joint"] for r in random_runs]
    bad_bracket = sum(1 for a in allocs if not a.n_lb <= a.n_served <= a.n_ub)
    bad_iter = sum(1 for a in allocs if a.iterations > gss_iteration_count(1.0, a.n_lb, a.n_ub))
    criterion(10, "bracket and iteration budget", bad_bracket == 0 and bad_iter == 0,
              f"{len(allocs)} plans, bracket violations {bad_bracket}, iteration overruns {bad_iter}")


def test_criterion_11_altitude(criterion):
    params = SystemParams(p_budget=dbm_to_watts(21.0), cell_radius=500.0)
    model = HeterogeneityModel(beta=2.0, base_rate=0.2)
    pts = altitude_sweep(model, params, A2gParams(), [200.0 * k for k in range(1, 11)])
    n = [p.n_star for p in pts]
    best = int(np.argmax(n))
    interior = n[best] > n[0] and n[best] > n[-1]
    dominant = all(p.n_star >= p.n_uniform for p in pts)
    criterion(11, "altitude sweep", interior and dominant,
              f"N* {n}, best height {pts[best].height:g} m, uniform {[p.n_uniform for p in pts]}")


def test_criterion_12_special_functions(criterion):
    rng = np.random.default_rng(12)
    fails = {}

    x = np.concatenate([-1 / math.e + rng.uniform(0, 1e-3, 1000), rng.uniform(-1 / math.e, 10.0, 9000)])
    w = lambert_w0(x)
    fails["lambert round trip"] = int(np.count_nonzero(np.abs(w * np.exp(w) - x) > 1e-12))
    xs = np.sort(x)
    fails["lambert monotone"] = int(np.count_nonzero(np.diff(lambert_w0(xs)) < 0))

    a_vals = np.sort(rng.uniform(0.0, 30.0, 100))
    b_vals = np.sort(rng.uniform(0.0, 40.0, 100))
    q = np.array([marcum_q1(a, b_vals) for a in a_vals])
    fails["marcum range"] = int(np.count_nonzero((q < 0) | (q > 1)))
    fails["marcum monotone in b"] = int(np.count_nonzero(np.diff(q, axis=1) > 1e-15))
    fails["marcum monotone in a"] = int(np.count_nonzero(np.diff(q, axis=0) < -1e-15))

    coeffs = [ApproxCoeffs(a=0.0, phi=float(f), psi=float(s))
              for f, s in zip(rng.uniform(-5, 2, 100), rng.uniform(0.5, 4, 100))]
    approx = np.array([q1_approx(c, b_vals) for c in coeffs])
    fails["approximation range"] = int(np.count_nonzero((approx < 0) | (approx > 1)))

    s = rng.uniform(1.05, 20.0, 10_000)
    xg = rng.uniform(0.0, 40.0, 10_000)
    rel = [abs(upper_incomplete_gamma(si, xi) - ((si - 1) * upper_incomplete_gamma(si - 1, xi)
               + xi ** (si - 1) * math.exp(-xi))) / upper_incomplete_gamma(si, xi) for si, xi in zip(s, xg)]
    fails["gamma recurrence"] = int(np.count_nonzero(np.array(rel) > 1e-9))

    total = sum(fails.values())
    criterion(12, "special-function properties", total == 0,
              "10^4 draws per family, failures " + ", ".join(f"{k} {v}" for k, v in fails.items()))
