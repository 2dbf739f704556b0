import math

import numpy as np
import pytest

from skycell.errors import NumericError
from skycell.quadrature import integrate


def test_sine_half_period():
    val, err = integrate(np.sin, 0.0, math.pi)
    assert val == pytest.approx(2.0, rel=1e-13)
    assert err < 1e-10


def test_gaussian_matches_erf():
    val, _ = integrate(lambda x: np.exp(-x * x), -3.0, 2.0, rel_tol=1e-12)
    expected = 0.5 * math.sqrt(math.pi) * (math.erf(2.0) + math.erf(3.0))
    assert val == pytest.approx(expected, rel=1e-12)


def test_reversed_and_empty_interval():
    assert integrate(np.cos, 1.0, 1.0)[0] == 0.0
    fwd, _ = integrate(np.cos, 0.0, 1.0)
    rev, _ = integrate(np.cos, 1.0, 0.0)
    assert rev == pytest.approx(-fwd, rel=1e-14)


def test_breakpoint_helps_kink():
    f = lambda x: np.abs(x - 0.3)
    val, _ = integrate(f, 0.0, 1.0, breakpoints=(0.3,), rel_tol=1e-12)
    assert val == pytest.approx(0.045 + 0.245, rel=1e-12)


def test_nonfinite_integrand_raises():
    with pytest.raises(NumericError):
        integrate(lambda x: np.full_like(x, np.nan), 0.0, 1.0)
