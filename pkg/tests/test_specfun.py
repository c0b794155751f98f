import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hypgreen import specfun as S
from hypgreen.specfun import DomainError, HypergeometricArgs, LegendreArgs


class TestPochhammer:
    def test_empty_product(self):
        assert S.pochhammer(2.7, 0) == 1.0

    def test_values(self):
        assert S.pochhammer(2, 3) == 24.0
        assert S.pochhammer(1, 5) == 120.0

    @given(st.floats(-5, 5), st.integers(0, 12))
    def test_matches_mpmath(self, a, k):
        assert S.pochhammer(a, k) == pytest.approx(float(mp.rf(a, k)), rel=1e-12, abs=1e-300)


class TestGauss2F1:
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5))
    def test_at_zero(self, a, b, c):
        assert S.hyp2f1(a, b, c, 0.0) == 1.0

    def test_half_point(self):
        assert S.hyp2f1(0.5, 1, 2, 0.5) == pytest.approx(4 * (1 - 1 / math.sqrt(2)), rel=1e-14)
        z = 0.5
        assert S.hyp2f1(0.5, 1, 2, z) == pytest.approx(2 * (1 - math.sqrt(1 - z)) / z, rel=1e-14)

    def test_gauss_summation(self):
        assert S.hyp2f1(0.5, 1, 2, 1.0) == pytest.approx(2.0, rel=1e-14)

    def test_approach_to_endpoint_is_monotone(self):
        vals = [S.hyp2f1(0.5, 1, 2, 1 - 10.0 ** -k) for k in range(1, 9)]
        assert all(np.diff(vals) > 0) and vals[-1] < 2.0
        assert abs(vals[-1] - 2.0) < 1e-3

    @given(st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 0.9))
    def test_contiguous_identity(self, a, b, z):
        assert S.hyp2f1(a, b, b, z) == pytest.approx((1 - z) ** (-a), rel=1e-10)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 4), st.floats(0, 0.999))
    def test_against_mpmath(self, a, b, c, z):
        ref = float(mp.hyp2f1(a, b, c, z))
        assume(abs(ref) > 1e-6 and abs(ref) < 1e8)
        assert S.hyp2f1(a, b, c, z) == pytest.approx(ref, rel=1e-9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            HypergeometricArgs(1, 1, -2, 0.5)
        with pytest.raises(DomainError):
            HypergeometricArgs(1, 1, 1.5, 1.0)
        with pytest.raises(DomainError):
            HypergeometricArgs(1, 1, 2, 1.5)


class TestLegendre:
    def test_q0(self):
        assert S.legendre_q_real(LegendreArgs(0, 0, 2.0)) == pytest.approx(0.5 * math.log(3), rel=1e-10)

    @pytest.mark.parametrize("z", [1.2, 2.0, 5.0])
    def test_classical_closed_forms(self, z):
        q0 = 0.5 * math.log((z + 1) / (z - 1))
        assert S.legendre_q_real(LegendreArgs(0, 0, z)) == pytest.approx(q0, rel=1e-9)
        assert S.legendre_q_real(LegendreArgs(0, 1, z)) == pytest.approx(z * q0 - 1, rel=1e-9)

    def test_resolvent_identity_h3(self):
        q = S.legendre_q_real(LegendreArgs(0.5, 0.5, math.cosh(1.0)))
        val = (2 * math.pi) ** -1.5 * math.sinh(1.0) ** -0.5 * q
        assert val == pytest.approx(math.exp(-1) / (4 * math.pi * math.sinh(1)), rel=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            LegendreArgs(0, -1.5, 2.0)
        with pytest.raises(DomainError):
            LegendreArgs(0, 0, 1.0)

    @pytest.mark.parametrize("mu,nu,z", [(0.5, 0.3, 1.5), (1.0, 0.7, 3.0), (1.5, -0.5, 1.1)])
    def test_against_mpmath_integral(self, mu, nu, z):
        f = lambda t: (z + mp.cos(t)) ** (mu - nu - 1) * mp.sin(t) ** (2 * nu + 1)
        ref = 2 ** (-nu - 1) * mp.gamma(nu + mu + 1) / mp.gamma(nu + 1) * (z * z - 1) ** (-mu / 2) * mp.quad(f, [0, mp.pi])
        assert S.legendre_q_real(LegendreArgs(mu, nu, z)) == pytest.approx(float(ref), rel=1e-10)


class TestConstants:
    def test_gamma_norm(self):
        assert S.gamma_norm(3, 2) == pytest.approx(4 * math.pi, rel=1e-14)
        assert S.gamma_norm(4, 2) == pytest.approx(4 * math.pi ** 2, rel=1e-14)
        with pytest.raises(DomainError):
            S.gamma_norm(3, 3)

    def test_hls_constant(self):
        ref = math.pi * math.sqrt(math.pi) * (math.sqrt(math.pi) / 4) ** (-1 / 3)
        assert S.hls_constant(3, 2) == pytest.approx(ref, rel=1e-13)
        with pytest.raises(DomainError):
            S.hls_constant(3, 3)

    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_hls_small_lambda_limit(self, n):
        assert S.hls_constant(n, 1e-9) == pytest.approx(1.0, abs=1e-7)

    @pytest.mark.parametrize("fn,n,x", [(S.gamma_norm, 3, 1.3), (S.gamma_norm, 5, 2.2), (S.hls_constant, 3, 1.7), (S.hls_constant, 4, 0.9)])
    def test_smooth_in_parameter(self, fn, n, x):
        def cd(h):
            return (fn(n, x + h) - fn(n, x - h)) / (2 * h)

        d1, d2 = cd(1e-3), cd(5e-4)
        rich = (4 * d2 - d1) / 3
        assert abs(d2 - rich) <= 1e-6 * max(1.0, abs(rich))


class TestPlancherel:
    @pytest.mark.parametrize("lam", [0.1, 1.0, 5.0])
    def test_n3(self, lam):
        assert S.plancherel_density(3, lam) == pytest.approx(lam * lam / 4, rel=1e-10)

    def test_zero(self):
        assert S.plancherel_density(3, 0.0) == 0.0

    @given(st.floats(0.01, 20), st.integers(2, 9))
    def test_even(self, lam, n):
        assert S.plancherel_density(n, -lam) == pytest.approx(S.plancherel_density(n, lam), rel=1e-13)
        assert S.plancherel_density(n, lam) >= 0
