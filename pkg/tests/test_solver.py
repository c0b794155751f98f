import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from hypgreen.geom import ball_distance, ball_to_halfspace, halfspace_distance
from hypgreen.kernels import BoggioBall
from hypgreen.solver import (
    Affine,
    ConfigError,
    Constant,
    HarmonicOperator,
    NystromOperator,
    Power,
    SolveConfig,
    SolveResult,
    UnsupportedCaseError,
    conformal_transfer,
    config_hash,
    contraction_proxy,
    halfspace_rhs,
    halfspace_transfer,
    make_operator,
    manufactured_solution,
    neumann_oracle,
    nonlinearity_from_dict,
    observed_order,
    pde_residual_check,
    solve_integral_equation,
    transferred_nonlinearity,
)
from hypgreen.specfun import DomainError, gamma_norm, hls_constant

BOGGIO = {"type": "BoggioBall", "n": 3, "k": 1, "R": 0.6}
MESH = {"n_radial": 12, "n_theta": 8}


def config(nonlinearity, **kw):
    d = {"kernel": BOGGIO, "mesh": MESH, "nonlinearity": nonlinearity}
    d.update(kw)
    return SolveConfig.from_dict(d)


@pytest.fixture(scope="module")
def op():
    cfg = config({"type": "Constant", "c": 1.0})
    return make_operator(cfg.kernel, cfg.mesh)


@pytest.fixture(scope="module")
def manufactured(op):
    cfg = config({"type": "Constant", "c": 0.0}, source={"type": "manufactured"})
    return cfg, solve_integral_equation(cfg, op)


class TestNonlinearity:
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 5))
    def test_affine_metadata(self, a, b, u):
        nl = Affine(a, b)
        assert nl.f(u) == pytest.approx(a * u + b)
        assert nl.fprime(u) == pytest.approx(a)
        assert nl.nondecreasing == (a >= 0)
        assert nl.f0_nonneg == (b >= 0)

    @given(st.floats(1.01, 5), st.floats(0, 10), st.floats(0.1, 3))
    def test_power_lipschitz_bound(self, p, amp, upper):
        nl = Power(p, amp)
        u = np.linspace(0, upper, 201)
        slopes = np.abs(np.diff(nl.f(u))) / np.diff(u)
        assert np.all(slopes <= nl.lipschitz_bound(upper) * (1 + 1e-9) + 1e-12)
        assert nl.nondecreasing and nl.f0_nonneg

    def test_constant_metadata(self):
        nl = Constant(2.0)
        assert nl.lipschitz_bound() == 0 and nl.nondecreasing and nl.f0_nonneg
        np.testing.assert_array_equal(nl.fprime(np.ones(3)), 0.0)

    @pytest.mark.parametrize("bad", [{"type": "Power", "p": 1.0}, {"type": "Constant", "c": -1}, {"type": "Cubic"}, {}])
    def test_invalid(self, bad):
        with pytest.raises((ConfigError, DomainError)):
            nonlinearity_from_dict(bad)


class TestConfig:
    @pytest.mark.parametrize("extra,key", [
        ({"damping": 0.0}, "damping"),
        ({"damping": 1.5}, "damping"),
        ({"tolerance": 0.0}, "tolerance"),
        ({"max_iterations": 0}, "max_iterations"),
        ({"colour": 1}, "colour"),
        ({"damping": "half"}, "damping"),
    ])
    def test_invalid_fields(self, extra, key):
        with pytest.raises(ConfigError) as exc:
            config({"type": "Constant", "c": 1.0}, **extra)
        assert exc.value.key == key

    def test_dimension_mismatch(self):
        from hypgreen.kernels import Fractional
        from hypgreen.quad import make_ball_mesh
        with pytest.raises(ConfigError):
            SolveConfig(Fractional(3, 1.0), make_ball_mesh(4, 2.0, 4, 4), Constant(1.0))

    def test_boggio_radius_is_implied(self):
        with pytest.raises(ConfigError):
            config({"type": "Constant", "c": 1.0}, mesh={"radius": 2.0})

    def test_whole_space_needs_radius(self):
        with pytest.raises(ConfigError):
            SolveConfig.from_dict({"kernel": {"type": "Fractional", "n": 3, "alpha": 2}, "nonlinearity": {"type": "Constant", "c": 1}})

    def test_round_trip_and_hash(self):
        cfg = config({"type": "Affine", "a": 0.1, "b": 1.0}, damping=0.7)
        d = cfg.to_dict()
        again = SolveConfig.from_dict({k: v for k, v in d.items() if v is not None})
        assert again.to_dict() == d
        assert config_hash(d) == config_hash(again.to_dict())
        assert config_hash(d) != config_hash({**d, "damping": 0.5})


class TestOperator:
    def test_harmonic_selected_for_origin_meshes(self, op):
        assert isinstance(op, HarmonicOperator)

    def test_nystrom_agrees_with_harmonic(self):
        cfg = config({"type": "Constant", "c": 1.0}, mesh={"n_radial": 6, "n_theta": 4})
        a = make_operator(cfg.kernel, cfg.mesh, method="nystrom")
        b = make_operator(cfg.kernel, cfg.mesh, method="harmonic")
        assert isinstance(a, NystromOperator)
        w_a, w_b = a.apply(np.ones(a.N)), b.apply(np.ones(b.N))
        assert np.max(np.abs(w_a - w_b)) <= 1e-3 * np.max(w_b)

    def test_threads_bit_identical(self):
        cfg = config({"type": "Constant", "c": 1.0}, mesh={"n_radial": 5, "n_theta": 4})
        g = np.cos(cfg.mesh.points()[:, 0])
        a = make_operator(cfg.kernel, cfg.mesh, threads=1, method="nystrom").apply(g)
        b = make_operator(cfg.kernel, cfg.mesh, threads=3, method="nystrom").apply(g)
        assert a.tobytes() == b.tobytes()

    def test_unknown_method(self):
        cfg = config({"type": "Constant", "c": 1.0})
        with pytest.raises(ConfigError):
            make_operator(cfg.kernel, cfg.mesh, method="direct")


class TestSolve:
    def test_constant_exact_after_one_step(self, op):
        cfg = config({"type": "Constant", "c": 2.5})
        res = solve_integral_equation(cfg, op)
        assert res.converged and res.iterations <= 2
        np.testing.assert_allclose(res.u, 2.5 * op.apply(np.ones(op.N)), rtol=1e-14)
        assert res.contraction_proxy == 0.0

    def test_affine_matches_neumann_series(self, op):
        eps = 0.1
        cfg = config({"type": "Affine", "a": eps, "b": 1.0})
        res = solve_integral_equation(cfg, op)
        assert res.converged
        assert res.residual_history[-1] <= 1e-8 * (1 + np.max(np.abs(res.u)))
        oracle = neumann_oracle(op, eps)
        assert np.max(np.abs(res.u - oracle)) <= 1e-6 * np.max(np.abs(oracle))
        assert res.contraction_proxy < 1

    def test_residual_history_nonincreasing(self, op):
        res = solve_integral_equation(config({"type": "Affine", "a": 0.3, "b": 1.0}), op)
        assert res.converged
        assert np.all(np.diff(res.residual_history[1:]) <= 1e-15)

    def test_power_divergence_is_reported(self, op):
        cfg = config({"type": "Power", "p": 2.0, "amplitude": 200.0}, initial={"type": "constant", "value": 1.0})
        nl, lip = cfg.nonlinearity, cfg.nonlinearity.lipschitz_bound(1.0)
        assert lip * op.norm_inf() > 1
        res = solve_integral_equation(cfg, op)
        assert not res.converged
        assert res.diagnostic.startswith("diverged")
        assert res.summary()["converged"] is False

    @pytest.mark.parametrize("nl", [{"type": "Constant", "c": 1.0}, {"type": "Affine", "a": 0.1, "b": 1.0}])
    def test_radial_and_positive(self, op, nl):
        cfg = config(nl)
        res = solve_integral_equation(cfg, op)
        shells = res.u.reshape(cfg.mesh.n_radial, cfg.mesh.n_angular)
        assert np.max(np.ptp(shells, axis=1)) <= 1e-8 * np.max(res.u)
        assert np.all(res.u > 0)

    def test_radial_from_off_center_bump(self, op):
        cfg = config({"type": "Affine", "a": 0.1, "b": 1.0},
                     initial={"type": "bump", "center": [0.2, 0.1, 0.0], "height": 1.0, "width": 0.3},
                     tolerance=1e-11)
        # the asymmetric part decays with the iteration, down to the stopping tolerance
        res = solve_integral_equation(cfg, op)
        shells = res.u.reshape(cfg.mesh.n_radial, cfg.mesh.n_angular)
        assert res.converged and np.max(np.ptp(shells, axis=1)) <= 1e-8 * np.max(res.u)

    def test_picard_monotone_from_zero(self, op):
        nl = Affine(0.4, 1.0)
        u = np.zeros(op.N)
        for _ in range(15):
            new = 0.5 * u + 0.5 * op.apply(nl.f(u))
            assert np.all(new - u >= -1e-13 * np.max(np.abs(new)))
            u = new

    def test_refinement_stability(self):
        sup = []
        for nr in (6, 12, 24):
            cfg = config({"type": "Affine", "a": 0.1, "b": 1.0}, mesh={"n_radial": nr, "n_theta": 6})
            sup.append(np.max(solve_integral_equation(cfg).u))
        assert abs(sup[2] - sup[1]) <= 5 * abs(sup[1] - sup[0]) + 1e-12

    def test_csv_and_summary(self, op):
        res = solve_integral_equation(config({"type": "Constant", "c": 1.0}), op)
        lines = res.to_csv().splitlines()
        assert lines[0] == "x1,x2,x3,u" and len(lines) == op.N + 1
        s = res.summary()
        assert s["converged"] and s["u_max"] == pytest.approx(np.max(res.u))


class TestContractionProxy:
    def test_constant_is_zero(self, op):
        cfg = config({"type": "Constant", "c": 3.0})
        assert contraction_proxy(cfg, np.ones(op.N)) == 0.0

    @pytest.mark.parametrize("a", [0.1, 0.7])
    def test_affine_closed_form(self, op, a):
        cfg = config({"type": "Affine", "a": a, "b": 1.0})
        vol = cfg.mesh.weights.sum()
        want = a * vol ** (2 / 3) * hls_constant(3, 1.0) / gamma_norm(3, 2.0)
        assert contraction_proxy(cfg, np.zeros(op.N)) == pytest.approx(want, rel=1e-12)
        assert vol == pytest.approx(cfg.mesh.exact_volume(), rel=1e-8)


class TestConformal:
    @given(st.integers(3, 7), st.integers(1, 3), st.integers(0, 2 ** 31))
    def test_ball_round_trip(self, n, k, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(20, n))
        X *= (rng.uniform(0, 0.98, 20) / np.linalg.norm(X, axis=1))[:, None]
        u = rng.normal(size=20)
        v = conformal_transfer(u, X, "to_euclidean", n, k)
        back = conformal_transfer(v, X, "to_hyperbolic", n, k)
        assert np.max(np.abs(back - u)) <= 1e-14 * np.max(np.abs(u))

    @pytest.mark.parametrize("n,k", [(3, 1), (5, 2), (7, 3)])
    def test_constant_one_transfers_to_power_of_lambda(self, n, k, rng):
        X = rng.uniform(-0.5, 0.5, size=(10, n))
        g = transferred_nonlinearity(Constant(1.0), n, k)
        want = (2.0 / (1.0 - np.sum(X * X, axis=1))) ** (k + n / 2)
        np.testing.assert_allclose(g.func(X, rng.normal(size=10)), want, rtol=1e-13)
        assert g.expression.endswith(f"^{k + n / 2!r}")

    def test_transferred_equation_is_consistent(self, rng):
        n, k = 5, 2
        X = rng.uniform(-0.4, 0.4, size=(8, n))
        u = rng.uniform(0.1, 2.0, 8)
        v = conformal_transfer(u, X, "to_euclidean", n, k)
        lam = 2.0 / (1.0 - np.sum(X * X, axis=1))
        for nl in (Affine(0.3, 1.2), Power(3.0, 0.5)):
            g = transferred_nonlinearity(nl, n, k)
            # (-Delta)^k v = lambda^{k+n/2} P_k u  with  P_k u = f(u)
            np.testing.assert_allclose(g.func(X, v), lam ** (k + n / 2) * nl.f(u), rtol=1e-13)

    def test_boundary_derivatives_transfer(self):
        # u vanishing to second order at the sphere: first differences of v vanish too
        n, k = 5, 2
        diffs = []
        for h in (1e-2, 5e-3, 2.5e-3):
            r = np.array([1 - h, 1 - 2 * h])
            X = np.zeros((2, n))
            X[:, 0] = r
            u = (1 - r ** 2) ** 2 * (1 + r)
            v = conformal_transfer(u, X, "to_euclidean", n, k)
            diffs.append(abs(v[0] - v[1]) / h)
        # v ~ (1 - r^2)^{3/2}: difference quotients shrink like h^{1/2}
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] / diffs[0] == pytest.approx(0.5, rel=0.05)

    def test_unknown_direction(self):
        with pytest.raises(DomainError):
            conformal_transfer([1.0], [[0.1, 0, 0]], "sideways", 3, 1)


class TestHalfspace:
    @given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2 ** 31))
    def test_round_trip(self, n, k, seed):
        rng = np.random.default_rng(seed)
        Y = rng.normal(size=(15, n))
        Y[:, -1] = rng.uniform(1e-3, 10, 15)
        w = rng.normal(size=15)
        back = halfspace_transfer(halfspace_transfer(w, Y, "to_euclidean", n, k), Y, "to_hyperbolic", n, k)
        assert np.max(np.abs(back - w)) <= 1e-14 * np.max(np.abs(w))

    @pytest.mark.parametrize("n,k", [(3, 1), (6, 2)])
    def test_linear_rhs(self, n, k, rng):
        Y = rng.uniform(0.1, 3, size=(10, n))
        w = rng.normal(size=10)
        np.testing.assert_allclose(halfspace_rhs(Affine(1.0, 0.0), Y, w, n, k), Y[:, -1] ** (-2 * k) * w, rtol=1e-13)

    def test_threshold(self):
        with pytest.raises(DomainError):
            halfspace_transfer([1.0], [[0.0, 0.0, 1e-9]], "to_euclidean", 3, 1)

    def test_geodesic_distance_matches_across_models(self, rng):
        for n in (2, 3, 5):
            X = rng.normal(size=(200, n))
            X *= (rng.uniform(0, 0.95, 200) / np.linalg.norm(X, axis=1))[:, None]
            Y = rng.normal(size=(200, n))
            Y *= (rng.uniform(0, 0.95, 200) / np.linalg.norm(Y, axis=1))[:, None]
            d_ball = ball_distance(X, Y)
            d_half = halfspace_distance(ball_to_halfspace(X), ball_to_halfspace(Y))
            np.testing.assert_allclose(d_half, d_ball, rtol=1e-12, atol=1e-12)


class TestResidual:
    def test_manufactured_formula_matches_sympy(self, rng):
        n, R, a, b = 3, 0.6, 0.3, 0.2
        x = sp.symbols("x1:4")
        r2 = sum(c ** 2 for c in x)
        u = (R ** 2 - r2) * (1 + a * x[0] + b * x[1] * x[2])
        lap = sum(sp.diff(u, c, 2) for c in x)
        xdg = sum(c * sp.diff(u, c) for c in x)
        lb = (1 - r2) ** 2 / 4 * lap + (n - 2) * (1 - r2) / 2 * xdg
        p1 = sp.lambdify(x, -lb - sp.Rational(n * (n - 2), 4) * u)
        u_np, p1u = manufactured_solution(n, R, (a, b))
        X = rng.uniform(-0.3, 0.3, size=(20, n))
        np.testing.assert_allclose(p1u(X), [p1(*p) for p in X], rtol=1e-12)

    def test_manufactured_recovery(self, manufactured):
        cfg, res = manufactured
        u_star, _ = manufactured_solution(3, 0.6)
        exact = u_star(res.points)
        h = 0.04
        assert np.max(np.abs(res.u - exact)) <= 10 * h * h * np.max(np.abs(exact))
        assert pde_residual_check(res, cfg, h=h)["residual"] <= 10 * h * h

    def test_observed_order(self, manufactured):
        cfg, res = manufactured
        out = observed_order(res, cfg)
        assert out["order"] >= 1.8
        r = out["residual"]
        assert 3.0 <= r[0] / r[1] <= 5.0 and 3.0 <= r[1] / r[2] <= 5.0

    def test_zero_problem(self, op):
        cfg = config({"type": "Constant", "c": 0.0})
        res = solve_integral_equation(cfg, op)
        assert np.all(res.u == 0)
        assert pde_residual_check(res, cfg, operator=op)["residual"] == 0.0

    def test_unsupported_for_higher_order(self):
        cfg = SolveConfig.from_dict({"kernel": {"type": "BoggioBall", "n": 5, "k": 2, "R": 0.7},
                                     "mesh": {"n_radial": 3, "n_theta": 2}, "nonlinearity": {"type": "Constant", "c": 1}})
        res = SolveResult(np.zeros(cfg.mesh.size), np.zeros(1), True, 0.0, 1, "", cfg.mesh.points())
        with pytest.raises(UnsupportedCaseError):
            pde_residual_check(res, cfg)

    def test_unsupported_for_whole_space(self):
        cfg = SolveConfig.from_dict({"kernel": {"type": "Fractional", "n": 3, "alpha": 2.0},
                                     "mesh": {"radius": 2.0, "n_radial": 4, "n_theta": 3}, "nonlinearity": {"type": "Constant", "c": 1}})
        res = solve_integral_equation(cfg)
        with pytest.raises(UnsupportedCaseError):
            pde_residual_check(res, cfg)

    def test_manufactured_source_needs_k1(self):
        cfg = SolveConfig.from_dict({"kernel": {"type": "Fractional", "n": 3, "alpha": 2.0},
                                     "mesh": {"radius": 2.0, "n_radial": 4, "n_theta": 3},
                                     "nonlinearity": {"type": "Constant", "c": 0}, "source": {"type": "manufactured"}})
        with pytest.raises(ConfigError):
            solve_integral_equation(cfg)
