import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fqstrat.gaussian import (
    TruncatedNormal,
    interval_prob,
    normal_cdf,
    normal_inv_cdf,
    stream,
    truncated_moments,
    truncated_normal_moments,
    truncated_normal_sample,
    truncated_normal_sample_bounds,
)

mpmath.mp.dps = 40


def _ref_cdf(x):
    return float(mpmath.ncdf(x))


@pytest.mark.parametrize("x", [-37.0, -20.0, -8.5, -3.0, -0.7, 0.0, 0.3, 1.0, 5.0, 8.0])
def test_cdf_matches_high_precision(x):
    ref = _ref_cdf(x)
    assert abs(normal_cdf(x) - ref) <= 1e-15
    # relative accuracy is limited by the conditioning x^2 of exp(-x^2/2)
    assert normal_cdf(x) == pytest.approx(ref, rel=max(1e-14, 4 * x * x * 2.2e-16), abs=1e-300)


def test_cdf_limits_and_symmetry():
    assert normal_cdf(-np.inf) == 0.0 and normal_cdf(np.inf) == 1.0
    assert normal_cdf(0.0) == 0.5
    x = np.linspace(-6, 6, 101)
    np.testing.assert_allclose(normal_cdf(x) + normal_cdf(-x), 1.0, atol=1e-15)


@pytest.mark.parametrize("p", [1e-300, 1e-20, 1e-8, 0.025, 0.5, 0.975, 1 - 1e-12])
def test_inverse_round_trip(p):
    x = normal_inv_cdf(p)
    back = normal_cdf(x) if p < 0.5 else 1.0 - float(mpmath.ncdf(-x))
    assert back == pytest.approx(p, rel=1e-12)


def test_inverse_known_quantile():
    assert normal_inv_cdf(0.975) == pytest.approx(1.959963984540054, abs=1e-14)
    assert normal_inv_cdf(0.5) == 0.0


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_inverse_domain(p):
    with pytest.raises(ValueError):
        normal_inv_cdf(p)


def test_interval_prob_far_tail_keeps_relative_accuracy():
    ref = float(mpmath.ncdf(-9) - mpmath.ncdf(-10))
    assert interval_prob(9.0, 10.0) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("a,b", [(-np.inf, -1.0), (-0.5, 0.25), (1.2, np.inf), (4.0, 6.0), (-np.inf, np.inf)])
def test_truncated_moments_vs_quadrature(a, b):
    mass, mean, var = truncated_moments(a, b)
    pdf = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)  # noqa: E731
    m0 = integrate.quad(pdf, a, b, epsabs=1e-15, epsrel=1e-13)[0]
    m1 = integrate.quad(lambda x: x * pdf(x), a, b, epsabs=1e-15, epsrel=1e-13)[0] / m0
    m2 = integrate.quad(lambda x: (x - m1) ** 2 * pdf(x), a, b, epsabs=1e-15, epsrel=1e-13)[0] / m0
    assert mass == pytest.approx(m0, rel=1e-10)
    assert mean == pytest.approx(m1, rel=1e-8, abs=1e-12)
    assert var == pytest.approx(m2, rel=1e-7)


def test_truncated_normal_cell_validation():
    with pytest.raises(ValueError):
        TruncatedNormal(1.0, 1.0)
    with pytest.raises(ValueError):
        TruncatedNormal(50.0, 60.0)  # zero mass in double precision
    cell = TruncatedNormal(-np.inf, 0.0)
    mean, var = truncated_normal_moments(cell)
    assert mean == pytest.approx(-math.sqrt(2 / math.pi))
    assert var == pytest.approx(1 - 2 / math.pi)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-8, 8), w=st.floats(1e-3, 5), u=st.floats(1e-12, 1 - 1e-12))
def test_sample_stays_in_cell(a, w, u):
    b = a + w
    x = truncated_normal_sample_bounds(a, b, u)
    assert a <= x <= b


def test_sample_is_monotone_and_matches_moments():
    cell = TruncatedNormal(0.5, 2.0)
    u = np.linspace(1e-6, 1 - 1e-6, 1001)
    x = truncated_normal_sample(cell, u)
    assert np.all(np.diff(x) >= 0)
    rng = stream(11, 0)
    draws = truncated_normal_sample(cell, rng.random(400_000))
    mean, var = cell.moments()
    se = math.sqrt(var / draws.size)
    assert abs(draws.mean() - mean) < 4 * se


def test_sample_extreme_tail_cell_is_finite():
    u = np.array([1e-9, 0.5, 1 - 1e-9])
    x = truncated_normal_sample_bounds(8.0, np.inf, u)
    assert np.all(np.isfinite(x)) and np.all(x >= 8.0)
    # mirror symmetry: the upper cell at u is minus the lower cell at 1 - u
    y = truncated_normal_sample_bounds(-np.inf, -8.0, 1.0 - u)
    np.testing.assert_array_equal(y, -x)
    assert x[0] == pytest.approx(8.000000000123134, abs=1e-12)


def test_sample_rejects_closed_uniforms():
    with pytest.raises(ValueError):
        truncated_normal_sample_bounds(0.0, 1.0, 0.0)


def test_streams_are_reproducible_and_distinct():
    a = stream(5, 1, 2).random(4)
    b = stream(5, 1, 2).random(4)
    c = stream(5, 2, 1).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
