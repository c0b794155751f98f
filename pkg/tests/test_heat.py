import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypgreen.heat import HeatQuery, heat_kernel, heat_kernel_array, odd_terms
from hypgreen.quad import radial_convolve, radial_integral
from hypgreen.specfun import DomainError


def p3(t, rho):
    """Closed-form heat kernel of H^3."""
    return (4 * math.pi * t) ** -1.5 * (rho / math.sinh(rho) if rho else 1.0) * math.exp(-t - rho * rho / (4 * t))


def test_h3_value():
    val = heat_kernel(HeatQuery(3, 1.0, 1.0))
    assert val == pytest.approx((4 * math.pi) ** -1.5 / math.sinh(1) * math.exp(-1.25), rel=1e-13)
    assert val == pytest.approx(5.472741e-3, rel=1e-6)


def test_h3_origin_limit():
    assert heat_kernel(HeatQuery(3, 0.5, 0.0)) == pytest.approx((2 * math.pi) ** -1.5 * math.exp(-0.5), rel=1e-13)


@given(st.floats(1e-3, 20), st.floats(0, 30))
def test_h3_closed_form(t, rho):
    ref = p3(t, rho)
    if ref > 1e-290:
        assert heat_kernel_array(3, t, rho) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("n", [5, 7])
def test_odd_dimensions_against_mpmath(n):
    """Apply (-(1/sinh)d/drho)^m to the Gaussian symbolically in mpmath."""
    m = (n - 1) // 2
    mp.mp.dps = 40
    t = mp.mpf("0.7")
    f = lambda r: mp.exp(-r * r / (4 * t))
    for rho in (0.05, 0.7, 3.0):
        g = f
        for _ in range(m):
            g = (lambda h: (lambda r: -mp.diff(h, r) / mp.sinh(r)))(g)
        pref = (-1) ** 0 * 2 ** (-m) * mp.pi ** (-m) * (4 * mp.pi * t) ** mp.mpf(-0.5)
        ref = pref * mp.exp(-(n - 1) ** 2 * t / 4) * g(mp.mpf(rho))
        assert heat_kernel_array(n, 0.7, rho) == pytest.approx(float(ref), rel=1e-9)
    mp.mp.dps = 15


def test_term_list_degree():
    assert len(odd_terms(0)) == 1
    assert all(len(term) == 5 for term in odd_terms(2))


@pytest.mark.parametrize("n,t,tol", [(3, 0.1, 1e-8), (3, 1.0, 1e-8), (4, 0.1, 1e-4), (4, 1.0, 1e-4), (5, 0.1, 1e-8), (5, 1.0, 1e-8)])
def test_normalization(n, t, tol):
    total = radial_integral(n, lambda r: heat_kernel_array(n, t, r), math.inf)
    assert total == pytest.approx(1.0, abs=tol)


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_semigroup(rho):
    h = lambda r: heat_kernel_array(3, 0.5, r)
    assert radial_convolve(3, h, h, rho) == pytest.approx(p3(1.0, rho), rel=1e-6)


@pytest.mark.parametrize("n,t", [(3, 0.3), (4, 0.3), (5, 2.0), (6, 1.0)])
def test_positive_and_decreasing(n, t):
    rho = np.linspace(0, 8, 400)
    v = heat_kernel_array(n, t, rho)
    assert np.all(v > 0)
    assert np.all(np.diff(v) < 0)


def test_tiny_times_are_finite():
    for t in (1e-15, 1e-12, 1e-9, 1e-6):
        v = heat_kernel_array(3, t, np.array([0.0, 1e-9, 1e-6, 1e-3]))
        assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_even_dimension_against_monte_carlo():
    """n=4 from the n=5 integrand, checked by importance sampling of the same integral."""
    t, rho = 0.6, 0.8
    rng = np.random.default_rng(7)
    lam, N = 1.5, 200_000
    s = rng.exponential(1 / lam, N)
    r = 2 * np.arcsinh(np.sqrt(np.sinh(rho / 2) ** 2 + 0.5 * s * s))
    h = 2 * math.sqrt(2) * math.exp(7 * t / 4) * heat_kernel_array(5, t, r) / (lam * np.exp(-lam * s))
    est, sigma = h.mean(), h.std() / math.sqrt(N)
    assert abs(heat_kernel_array(4, t, rho) - est) <= 3 * sigma


def test_domain_errors():
    with pytest.raises(DomainError):
        HeatQuery(3, 0.0, 1.0)
    with pytest.raises(DomainError):
        heat_kernel_array(3, -1.0, 1.0)
    with pytest.raises(DomainError):
        heat_kernel_array(3, 1.0, -1.0)


def test_shift_factor():
    assert heat_kernel_array(5, 0.4, 1.1, shifted=True) == pytest.approx(math.exp(4 * 0.4) * heat_kernel_array(5, 0.4, 1.1), rel=1e-14)
