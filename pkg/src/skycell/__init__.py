"""Rate-coverage analysis and power/time allocation for a UAV serving ground users."""

from .a2g import A2gParams, altitude_sweep, min_resources_a2g, p_los, pcov_a2g
from .allocator import (
    Allocation,
    KktReport,
    compute_v,
    gss_iteration_count,
    independent_power_plan,
    joint_optimize,
    kkt_residuals,
    opa_optimize,
    ota_optimize,
    power_from_time,
    solve_p3,
    tau_of_gamma,
    time_from_power,
    uniform_baseline,
)
from .bounds import n_lower, n_upper
from .coverage import (
    CoverageReport,
    pcov_closed,
    pcov_dominant_los,
    pcov_exact,
    pcov_high_snr,
    pcov_monte_carlo,
    pcov_rayleigh,
)
from .errors import ApproximationError, ConfigError, DomainError, NumericError
from .geometry import SystemParams, distance_pdf, sample_distances
from .mobility import replan, slot_count
from .profiles import HeterogeneityModel, UserProfile, make_profiles
from .specfun import (
    ApproxCoeffs,
    bessel_i0,
    fit_q1_coeffs,
    lambert_w0,
    marcum_q1,
    upper_incomplete_gamma,
)

__version__ = "0.1.0"
