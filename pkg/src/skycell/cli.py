"""Command-line experiment harness.

Every command writes one CSV table (to ``--out`` or stdout). When ``--out``
is given, a ``<out>.meta.json`` sidecar records the resolved scenario, the
command line options and the tool version.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .a2g import A2gParams, altitude_sweep
from .allocator import joint_optimize, opa_optimize, ota_optimize, uniform_baseline
from .bounds import n_lower, n_upper
from .config import Scenario, load_scenario, parse_sweep, scenario_to_dict
from .coverage import (
    coeffs_for,
    pcov_closed,
    pcov_dominant_los,
    pcov_exact,
    pcov_high_snr,
    pcov_monte_carlo,
    pcov_rayleigh,
)
from .errors import ConfigError, DomainError, NumericError
from .geometry import dbm_to_watts
from .mobility import circular_waypoints, replan, slot_count
from .profiles import make_profile, make_profiles
from .scenarios import sweep_scenario

log = logging.getLogger("skycell")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

OPERATING_POINT_PARAMS = ("power_w", "tau")
DEFAULT_POWERS = tuple(float(p) for p in np.logspace(-2, 0, 12))
DEFAULT_HEIGHTS = tuple(float(h) for h in range(200, 2001, 200))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise NumericError(f"non-finite value {v} in output")
        return repr(v)
    return str(v)


def _render(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _emit(args, scenario: Scenario, header, rows) -> None:
    text = _render(header, rows)
    out = args.out or scenario.output_path
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text, newline="")
    meta = {
        "tool": "skycell",
        "version": __version__,
        "command": args.command,
        "options": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")},
        "scenario": scenario_to_dict(scenario),
    }
    path.with_name(path.stem + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _pool_map(fn: Callable, tasks: list, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _coverage_point(task):
    scenario, user_index, tau, p, trials, seed = task
    params = scenario.system
    user = make_profile(scenario.heterogeneity, user_index)
    coeffs = coeffs_for(user)
    rows = [
        ("exact", pcov_exact(user, p, tau, params), 0.0),
        ("closed_form", pcov_closed(user, p, tau, params, coeffs), 0.0),
        ("high_snr", pcov_high_snr(user, p, tau, params, coeffs), 0.0),
        ("dominant_los", pcov_dominant_los(user, p, tau, params), 0.0),
        ("rayleigh", pcov_rayleigh(user, p, tau, params), 0.0),
    ]
    if trials:
        mc, se = pcov_monte_carlo(user, p, tau, params, trials, seed)
        rows.append(("monte_carlo", mc, se))
    return rows


def cmd_coverage(args, scenario: Scenario):
    param = args.param or "power_w"
    values = _float_list(args.values) if args.values else (list(DEFAULT_POWERS) if param == "power_w" else None)
    if values is None:
        raise ConfigError(f"--values is required for --param {param}")
    tasks = []
    for v in values:
        sc, p, tau = scenario, args.power, args.tau
        if param == "power_w":
            p = v
        elif param == "tau":
            tau = v
        else:
            sysp, model = sweep_scenario(scenario.system, scenario.heterogeneity, parse_sweep(param, [v])[0], v)
            sc = Scenario(sysp, model, scenario.a2g, None, scenario.mobility, scenario.mc_trials)
        tasks.append((sc, args.user, tau, p, args.trials if args.trials is not None else 0, args.seed or 0))
    results = _pool_map(_coverage_point, tasks, args.workers)
    rows = []
    for i, (v, res) in enumerate(zip(values, results)):
        for method, prob, se in res:
            rows.append((i, param, v, method, prob, se))
    return ("point", "param", "value", "method", "pcov", "stderr"), rows


def cmd_bounds(args, scenario: Scenario):
    profiles = make_profiles(scenario.heterogeneity)
    lo = n_lower(scenario.system, profiles)
    hi = n_upper(scenario.system, profiles)
    return ("n_lower", "n_upper"), [(lo, hi)]


SCHEMES = {
    "joint": joint_optimize,
    "opa": opa_optimize,
    "ota": ota_optimize,
    "uniform": uniform_baseline,
}


def cmd_plan(args, scenario: Scenario):
    m = scenario.heterogeneity
    log.info("heterogeneity exponents a1=%g a2=%g", m.a1, m.a2)
    rows, detail = [], []
    for name, fn in SCHEMES.items():
        t0 = time.perf_counter()
        alloc = fn(scenario.system, scenario.heterogeneity)
        ms = 0.0 if args.no_timing else (time.perf_counter() - t0) * 1e3
        rows.append((name, alloc.n_served, alloc.sum_power, alloc.sum_tau, ms))
        log.info("%s: N*=%d", name, alloc.n_served)
        for i in range(alloc.n_served):
            detail.append((name, i + 1, alloc.powers[i], alloc.times[i], alloc.energies[i]))
    if args.allocations:
        Path(args.allocations).write_text(
            _render(("scheme", "user", "power_W", "tau", "energy_J"), detail), newline="")
    return ("scheme", "N_star", "sum_power_W", "sum_tau", "runtime_ms"), rows


def _sweep_point(task):
    scenario, name, value = task
    params, model = sweep_scenario(scenario.system, scenario.heterogeneity, name, value)
    j = joint_optimize(params, model)
    return (j.n_served, opa_optimize(params, model).n_served, ota_optimize(params, model).n_served,
            uniform_baseline(params, model).n_served, j.n_lb, j.n_ub)


def cmd_sweep(args, scenario: Scenario):
    if args.param:
        if not args.values:
            raise ConfigError("--param needs --values")
        name, values = parse_sweep(args.param, args.values)
    elif scenario.sweep:
        name, values = scenario.sweep
    else:
        raise ConfigError("sweep needs --param/--values or a 'sweep' section in the config")
    results = _pool_map(_sweep_point, [(scenario, name, v) for v in values], args.workers)
    rows = [(i, name, v, *r) for i, (v, r) in enumerate(zip(values, results))]
    return ("index", "param", "value", "N_joint", "N_opa", "N_ota", "N_uniform", "n_lb", "n_ub"), rows


def cmd_a2g(args, scenario: Scenario):
    heights = _float_list(args.heights) if args.heights else list(DEFAULT_HEIGHTS)
    a2g = scenario.a2g or A2gParams()
    pts = altitude_sweep(scenario.heterogeneity, scenario.system, a2g, heights, workers=args.workers)
    return ("height_m", "N_joint", "N_uniform"), [(p.height, p.n_star, p.n_uniform) for p in pts]


def cmd_mobility(args, scenario: Scenario):
    m = scenario.mobility
    h = scenario.system.uav_altitude
    n_slots = slot_count(m.v_max, m.flight_time, h, m.accuracy)
    wps = circular_waypoints(m.orbit_radius, h, n_slots)
    plans = replan(wps, scenario.heterogeneity, scenario.system, workers=args.workers)
    rows = [(k, x, y, z, a.n_served, a.sum_power, a.sum_tau) for k, ((x, y, z), a) in enumerate(zip(wps, plans))]
    return ("slot", "x_m", "y_m", "h_m", "N_star", "sum_power_W", "sum_tau"), rows


def _validate_case(task):
    case, scenario, eta, h, p, tau, trials, seed = task
    params = scenario.system.with_(uav_altitude=h)
    user = make_profile(scenario.heterogeneity, 1).with_(rate_threshold=eta)
    if case == "rayleigh":
        user = user.with_(rice_k=0.0)
        analytic = pcov_rayleigh(user, p, tau, params)
    else:
        analytic = pcov_closed(user, p, tau, params)
    exact = pcov_exact(user, p, tau, params)
    mc, se = pcov_monte_carlo(user, p, tau, params, trials, seed)
    # The Rician closed form carries the fit error; the Rayleigh form is exact,
    # so only sampling noise (four standard errors plus one trial) is allowed.
    tol = max(0.02, 3.0 * se) if case == "rician" else 4.0 * se + 1.0 / trials
    ok = abs(analytic - mc) <= tol
    return (case, eta, h, p, exact, analytic, mc, se, abs(analytic - mc), ok)


def cmd_validate(args, scenario: Scenario):
    trials = args.trials if args.trials is not None else scenario.mc_trials
    if trials < 1000:
        raise ConfigError("validate needs at least 1000 trials")
    seed = args.seed if args.seed is not None else scenario.system.rng_seed
    tasks = []
    for case in ("rician", "rayleigh"):
        for eta in (0.1, 0.5):
            for h in (400.0, 600.0):
                for k, p in enumerate(DEFAULT_POWERS):
                    tasks.append((case, scenario, eta, h, p, args.tau, trials, seed + len(tasks)))
    rows = _pool_map(_validate_case, tasks, args.workers)
    bad = sum(1 for r in rows if not r[-1])
    if bad:
        log.warning("%d of %d validation points outside tolerance", bad, len(rows))
    header = ("case", "eta", "h_m", "power_W", "exact", "analytic", "monte_carlo", "stderr", "abs_diff", "ok")
    return header, rows


COMMANDS = {
    "coverage": cmd_coverage,
    "bounds": cmd_bounds,
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "a2g": cmd_a2g,
    "mobility": cmd_mobility,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--seed", type=int, help="overrides system.rng_seed")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--out", help="CSV output path (default stdout)")

    parser = argparse.ArgumentParser(prog="skycell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"skycell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("coverage", parents=[common], help="coverage from every estimator")
    p.add_argument("--param", help="power_w, tau, or a scenario field (default power_w)")
    p.add_argument("--values", help="comma-separated values in SI units")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (0 disables)")
    p.add_argument("--user", type=int, default=1, help="user index")
    p.add_argument("--power", type=float, default=0.1, help="power in W when not swept")
    p.add_argument("--tau", type=float, default=0.1, help="time share when not swept")

    sub.add_parser("bounds", parents=[common], help="bracket on the number of servable users")

    p = sub.add_parser("plan", parents=[common], help="joint, OPA, OTA and uniform plans")
    p.add_argument("--no-timing", action="store_true", help="write 0 in runtime_ms for reproducible output")
    p.add_argument("--allocations", help="also write per-user allocations to this CSV")

    p = sub.add_parser("sweep", parents=[common], help="served users across one parameter")
    p.add_argument("--param", help="scenario field, e.g. p_budget")
    p.add_argument("--values", help="comma-separated values in SI units")

    p = sub.add_parser("a2g", parents=[common], help="air-to-ground altitude sweep")
    p.add_argument("--heights", help="comma-separated altitudes in m")

    sub.add_parser("mobility", parents=[common], help="per-slot plans along a circular orbit")

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo cross-checks")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--tau", type=float, default=0.1, help="time share")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("SKYCELL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run_command(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one command; returns the process exit code."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = Scenario(scenario.system.with_(rng_seed=args.seed), scenario.heterogeneity,
                                scenario.a2g, scenario.sweep, scenario.mobility,
                                scenario.mc_trials, scenario.output_path)
        header, rows = COMMANDS[args.command](args, scenario)
        _emit(args, scenario, header, rows)
    except (ConfigError, DomainError, KeyError) as exc:
        print(f"skycell: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"skycell: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())
