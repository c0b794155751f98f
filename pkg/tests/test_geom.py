import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypgreen import geom as G
from conftest import ball_points


def coords(n=3, r=0.95):
    return st.lists(st.floats(-1, 1), min_size=n, max_size=n).map(
        lambda v: np.asarray(v) * r / max(1.0, np.linalg.norm(v) * 1.0001))


class TestDistance:
    def test_coincident_origin(self):
        o = G.BallPoint(np.zeros(3))
        assert G.geodesic_distance(o, o) == 0.0

    def test_origin_to_half(self):
        d = G.geodesic_distance(G.BallPoint([0, 0, 0]), G.BallPoint([0.5, 0, 0]))
        assert d == pytest.approx(math.log(3.0), rel=1e-14)

    def test_diameter_additivity(self):
        d = G.geodesic_distance(G.BallPoint([0.3, 0, 0]), G.BallPoint([-0.3, 0, 0]))
        assert d == pytest.approx(2 * math.log(13 / 7), rel=1e-14)
        assert d == pytest.approx(1.2380784168, abs=1e-10)

    def test_arc_length_along_radius(self):
        from scipy.integrate import quad
        length, _ = quad(lambda r: 2.0 / (1 - r * r), 0, 0.5)
        assert length == pytest.approx(math.log(3.0), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(G.GeometryError):
            G.geodesic_distance(G.BallPoint([0.1, 0]), G.BallPoint([0.1, 0, 0]))

    def test_rejects_boundary_points(self):
        with pytest.raises(G.GeometryError):
            G.BallPoint([1.0, 0, 0])
        with pytest.raises(G.GeometryError):
            G.BallPoint([1 - 1e-16, 0, 0])

    @given(coords(), coords(), coords())
    def test_metric_axioms(self, x, y, z):
        dxy = G.ball_distance(x, y)
        assert dxy == pytest.approx(G.ball_distance(y, x), rel=1e-12, abs=1e-12)
        assert dxy >= 0
        assert dxy <= G.ball_distance(x, z) + G.ball_distance(z, y) + 1e-9

    @given(coords(), coords())
    def test_sinh_half_identity(self, x, y):
        lhs = 2 * np.sinh(G.ball_distance(x, y) / 2)
        rhs = 2 * np.linalg.norm(x - y) / np.sqrt((1 - x @ x) * (1 - y @ y))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)
        assert G.ball_sinh_half_distance(x, y) == pytest.approx(rhs / 2, rel=1e-12, abs=1e-14)


class TestModels:
    def test_origin_to_hyperboloid(self):
        h = G.convert_model(G.BallPoint(np.zeros(3)), "hyperboloid")
        assert h.x0 == 1.0 and np.all(h.xvec == 0)

    def test_half_to_hyperboloid(self):
        h = G.convert_model(G.BallPoint([0.5, 0, 0]), "hyperboloid")
        np.testing.assert_allclose(h.as_array(), [5 / 3, 4 / 3, 0, 0], rtol=1e-15)
        assert -h.x0 ** 2 + h.xvec @ h.xvec == pytest.approx(-1, abs=1e-14)

    def test_identity_conversion(self):
        p = G.BallPoint([0.1, 0.2])
        assert G.convert_model(p, "ball") is p

    def test_round_trips(self, rng):
        for x in ball_points(rng, 100, 4):
            p = G.BallPoint(x)
            for target in ("halfspace", "hyperboloid"):
                back = G.convert_model(G.convert_model(p, target), "ball")
                np.testing.assert_allclose(back.coords, x, atol=1e-12)

    def test_distance_preserved_across_models(self, rng):
        X, Y = ball_points(rng, 50, 3), ball_points(rng, 50, 3)
        d_ball = G.ball_distance(X, Y)
        d_half = G.halfspace_distance(G.ball_to_halfspace(X), G.ball_to_halfspace(Y))
        HX, HY = G.ball_to_hyperboloid(X), G.ball_to_hyperboloid(Y)
        d_hyp = np.arccosh(-G.lorentz_dot(HX, HY))
        np.testing.assert_allclose(d_half, d_ball, rtol=1e-10)
        np.testing.assert_allclose(d_hyp, d_ball, rtol=1e-8)

    def test_invalid_points(self):
        with pytest.raises(G.GeometryError):
            G.HalfSpacePoint([0.0, -1.0])
        with pytest.raises(G.GeometryError):
            G.HyperboloidPoint(1.0, [0.5, 0.0])


class TestReflections:
    def test_t0_is_coordinate_flip(self):
        x = G.BallPoint([0.3, -0.2, 0.1])
        y = G.reflect_across_leaf(x, G.FoliationLeaf(1, 0.0))
        np.testing.assert_allclose(y.coords, [-0.3, -0.2, 0.1], atol=1e-15)

    @given(coords(), st.floats(-2, 2), st.integers(1, 3))
    def test_involution(self, x, t, i):
        leaf = G.FoliationLeaf(i, t)
        twice = G.reflect_points(G.reflect_points(x, leaf), leaf)
        np.testing.assert_allclose(twice, x, atol=1e-10)

    @given(coords(), coords(), st.floats(-2, 2), st.integers(1, 3))
    def test_isometry(self, x, y, t, i):
        leaf = G.FoliationLeaf(i, t)
        d0 = G.ball_distance(x, y)
        d1 = G.ball_distance(G.reflect_points(x, leaf), G.reflect_points(y, leaf))
        assert d1 == pytest.approx(d0, rel=1e-9, abs=1e-9)

    def test_fixes_leaf(self, rng):
        leaf = G.FoliationLeaf(2, 0.7)
        X = ball_points(rng, 200, 3, 0.9)
        on = []
        for x in X:
            # slide each sample along direction 2 onto the leaf
            from scipy.optimize import brentq
            f = lambda s: float(G.leaf_side(np.r_[x[0], s, x[2]], leaf))
            lim = math.sqrt(max(1 - x[0] ** 2 - x[2] ** 2, 0)) * 0.999999
            if f(-lim) * f(lim) < 0:
                on.append(np.r_[x[0], brentq(f, -lim, lim, xtol=1e-15), x[2]])
        on = np.array(on)
        assert len(on) > 50
        np.testing.assert_allclose(G.reflect_points(on, leaf), on, atol=1e-9)
        off = X[np.abs(G.leaf_side(X, leaf)) > 1e-3]
        moved = np.linalg.norm(G.reflect_points(off, leaf) - off, axis=1)
        assert np.all(moved > 1e-5)

    def test_hyperboloid_constraint_preserved(self, rng):
        X = G.ball_to_hyperboloid(ball_points(rng, 50, 3))
        for M in (G.hyperbolic_rotation(X, 0.8, np.array([0, 1.0, 0])), G.coordinate_flip(X, np.array([1.0, 0, 0]))):
            np.testing.assert_allclose(G.lorentz_dot(M, M), -1, atol=1e-12 * np.max(M[:, 0] ** 2))

    def test_leaf_through_and_intersection(self):
        p = np.array([0.2, -0.1, 0.3])
        ts = [G.leaf_through(p, i) for i in (1, 2, 3)]
        for i, t in enumerate(ts, 1):
            assert abs(G.leaf_side(p, G.FoliationLeaf(i, t))) < 1e-14
        np.testing.assert_allclose(G.leaves_intersection(ts), p, atol=1e-14)

    def test_bad_direction(self):
        with pytest.raises(G.GeometryError):
            G.FoliationLeaf(4, 0.0).normal_vector(3)


class TestMobius:
    @given(coords())
    def test_sends_y_to_origin(self, y):
        np.testing.assert_allclose(G.mobius_apply(y, y), 0, atol=1e-12)

    @given(coords(), coords())
    def test_distance(self, x, y):
        d = G.origin_distance(G.mobius_apply(x, y))
        assert d == pytest.approx(G.ball_distance(x, y), rel=1e-9, abs=1e-10)

    def test_identity_at_origin(self, rng):
        X = ball_points(rng, 20, 3)
        np.testing.assert_allclose(G.mobius_apply(X, np.zeros(3)), X, atol=1e-15)
        p = G.mobius_translate(G.BallPoint(X[0]), G.BallPoint(np.zeros(3)))
        np.testing.assert_allclose(p.coords, X[0], atol=1e-15)


def test_volume_element_consistency():
    from scipy.integrate import quad
    n, r = 3, 0.7
    lhs, _ = quad(lambda s: G.sphere_area(n) * s ** (n - 1) * (2 / (1 - s * s)) ** n, 0, r, epsabs=0, epsrel=1e-13)
    R = math.log((1 + r) / (1 - r))
    rhs, _ = quad(lambda s: G.sphere_area(n) * math.sinh(s) ** (n - 1), 0, R, epsabs=0, epsrel=1e-13)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    np.testing.assert_allclose(G.volume_density(np.array([[0.3, 0, 0]])), (2 / 0.91) ** 3)
