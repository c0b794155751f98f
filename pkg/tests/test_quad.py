import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypgreen import quad as Q
from hypgreen.geom import ball_distance
from hypgreen.heat import heat_kernel_array
from hypgreen.specfun import DomainError


class TestRadialIntegral:
    def test_constant(self):
        val = Q.radial_integral(3, lambda r: np.ones_like(r), 1.0)
        assert val == pytest.approx(math.pi * (math.sinh(2) - 2), rel=1e-12)
        assert val == pytest.approx(5.110933, abs=1e-6)

    def test_heat_infinite(self):
        assert Q.radial_integral(3, lambda r: heat_kernel_array(3, 1.0, r), math.inf) == pytest.approx(1, abs=1e-8)

    def test_empty(self):
        assert Q.radial_integral(3, lambda r: np.ones_like(r), 0.0) == 0.0

    def test_power_singular(self):
        sigma = 0.5
        val = Q.radial_integral(3, lambda r: r ** (-(3 - sigma)) / np.sinh(r) ** 2 * r ** 2, 1.0, singular_exponent=sigma)
        assert val == pytest.approx(4 * math.pi / sigma, rel=1e-6)

    def test_divergent_declared(self):
        with pytest.raises(DomainError):
            Q.radial_integral(3, lambda r: r ** -3.0, 1.0, singular_exponent=0.0)

    def test_non_finite(self):
        with pytest.raises(Q.EvaluationError):
            Q.radial_integral(3, lambda r: np.full_like(r, np.nan), 1.0)


def _gauss(X):
    return np.exp(-ball_distance(X, np.zeros(X.shape[1])) ** 2)


class TestBallMesh:
    @pytest.mark.parametrize("n,nt", [(3, 8), (4, 6), (5, 64)])
    def test_volume_and_positivity(self, n, nt):
        mesh = Q.make_ball_mesh(n, 1.3, n_radial=12, n_theta=nt)
        assert np.all(mesh.weights > 0)
        assert mesh.volume() == pytest.approx(mesh.exact_volume(), rel=1e-8)
        assert Q.ball_integral(mesh, lambda X: np.ones(len(X))) == pytest.approx(mesh.exact_volume(), rel=1e-8)

    @pytest.mark.parametrize("n", [3, 4])
    def test_odd_function(self, n):
        mesh = Q.make_ball_mesh(n, 1.3, n_radial=12, n_theta=8)
        assert abs(Q.ball_integral(mesh, lambda X: X[:, 0])) < 1e-10

    def test_radial_gaussian(self):
        mesh = Q.make_ball_mesh(3, 1.5, n_radial=20, n_theta=6)
        ref = Q.radial_integral(3, lambda r: np.exp(-r * r), 1.5)
        assert Q.ball_integral(mesh, _gauss) == pytest.approx(ref, rel=1e-8)

    def test_refinement(self):
        f = lambda X: np.exp(X[:, 0] - 2 * X[:, 1] ** 2 + X[:, 2])
        a = Q.ball_integral(Q.make_ball_mesh(3, 1.0, n_radial=16, n_theta=12), f)
        b = Q.ball_integral(Q.make_ball_mesh(3, 1.0, n_radial=32, n_theta=24), f)
        assert abs(a - b) <= 1e-8 * abs(b)

    def test_off_center_volume(self):
        mesh = Q.make_ball_mesh(3, 0.8, n_radial=10, n_theta=6, center=[0.3, -0.2, 0.1])
        assert mesh.volume() == pytest.approx(mesh.exact_volume(), rel=1e-8)
        d = ball_distance(mesh.points(), mesh.center.coords)
        np.testing.assert_allclose(d, mesh.rho, rtol=1e-10)

    def test_text_round_trip(self):
        mesh = Q.make_ball_mesh(3, 0.9, n_radial=5, n_theta=4, center=[0.1, 0, 0])
        text = mesh.to_text()
        back = Q.BallMesh.from_text(text)
        np.testing.assert_array_equal(back.points(), mesh.points())
        np.testing.assert_array_equal(back.weights, mesh.weights)
        assert back.to_text() == text
        with pytest.raises(ValueError):
            Q.BallMesh.from_text("garbage\n")

    def test_non_finite_integrand_names_node(self):
        mesh = Q.make_ball_mesh(3, 0.9, n_radial=4, n_theta=4)
        with pytest.raises(Q.EvaluationError, match="node 0"):
            Q.ball_integral(mesh, lambda X: np.where(np.arange(len(X)) == 0, np.inf, 1.0))

    def test_pairwise_dot_order_free(self, rng):
        a, b = rng.normal(size=1001), rng.normal(size=1001)
        assert Q.pairwise_dot(a, b) == pytest.approx(float(a @ b), rel=1e-12)
        assert Q.pairwise_dot(a, b) == Q.pairwise_dot(a.copy(), b.copy())


class TestConvolution:
    def test_peak_limit(self):
        g = lambda r: np.exp(-np.asarray(r) ** 2 / 3)
        errs = []
        for j in range(2, 6):
            w = 2.0 ** -j
            norm = Q.radial_integral(3, lambda r: np.exp(-(r / w) ** 2), 10 * w)
            f = lambda r, w=w, norm=norm: np.exp(-(np.asarray(r) / w) ** 2) / norm
            errs.append(abs(Q.radial_convolve(3, f, g, 1.0, tail=12) - g(1.0)))
        assert errs[-1] < 1e-3 and all(np.diff(errs) < 0)

    @given(st.floats(0.05, 4.0), st.floats(0.3, 3.0), st.floats(0.3, 3.0))
    @settings(max_examples=20)
    def test_symmetry(self, rho, a, b):
        f = lambda r: np.exp(-a * np.asarray(r))
        g = lambda r: 1 / (1 + b * np.asarray(r) ** 2) ** 3
        for n in (3, 4):
            fg, gf = Q.radial_convolve(n, f, g, rho, tail=25), Q.radial_convolve(n, g, f, rho, tail=25)
            assert fg == pytest.approx(gf, rel=1e-10)

    def test_heat_semigroup(self):
        h = lambda r: heat_kernel_array(3, 0.5, r)
        ref = heat_kernel_array(3, 1.0, 1.0)
        assert Q.radial_convolve(3, h, h, 1.0) == pytest.approx(ref, rel=1e-6)

    def test_preserves_monotonicity(self):
        rng = np.random.default_rng(3)
        grid = np.linspace(0.05, 5, 25)
        for _ in range(20):
            a, b, c = rng.uniform(0.3, 3, 3)
            # integrable against sinh^2: tails beat e^{-2 rho}
            f = lambda r: np.exp(-a * np.asarray(r) ** 2) + 0.1 * np.exp(-3 * np.abs(r))
            g = lambda r: np.exp(-2.5 * np.abs(r)) / (1 + b * np.asarray(r)) ** c
            out = np.array([Q.radial_convolve(3, f, g, r, tail=30) for r in grid])
            assert np.all(out > 0) and np.all(np.diff(out) < 0)

    def test_coverage_error(self):
        from hypgreen.kernels import RadialProfile
        prof = RadialProfile(None, np.geomspace(0.01, 5, 50), np.exp(-np.geomspace(0.01, 5, 50)), extrapolates=False)
        with pytest.raises(DomainError):
            Q.radial_convolve(3, prof, prof, 1.0, tail=40)
