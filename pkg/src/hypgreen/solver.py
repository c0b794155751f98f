"""Nystrom discretization and damped Picard iteration for

    u(x) = int G(x, y) [f(u(y)) + s(y)] dV_y

on a polar ball mesh, with ``G`` a Dirichlet kernel on a ball (``BoggioBall``)
or a whole-space radial kernel truncated to a geodesic ball (zero extension).
Also: conformal transfers to the Euclidean ball and half-space, and a
finite-difference residual check for ``k = 1``.

The kernel matrix uses singularity subtraction,

    u_i = sum_{j != i} G_ij w_j (g_j - g_i) + g_i W_i,    W_i = int G(x_i, y) dV_y,

with ``W_i`` integrated accurately in polar coordinates about ``x_i``, plus
a local moment-fitting correction on near neighbours. Origin-centered
``n = 3`` meshes use :class:`HarmonicOperator` instead, which expands the
kernel in Legendre modes and integrates each mode radially; it stays
accurate on large hyperbolic balls where point sampling of the kernel fails.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special

from . import _core_py
from ._backend import core as _core
from .fields import MeshField
from .geom import ball_distance, mobius_apply
from .kernels import (
    BoggioBall,
    KernelSpec,
    LegendreResolvent,
    Product,
    RadialProfile,
    default_grid,
    eval_kernel,
    spec_from_dict,
    spec_to_dict,
)
from .quad import BallMesh, gauss_jacobi, gauss_legendre, graded_rule, make_ball_mesh, panel_rule, sphere_rule
from .specfun import DomainError, gamma_norm, hls_constant


class ConfigError(ValueError):
    """Invalid solver configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnsupportedCaseError(NotImplementedError):
    """Requested check is not available for this configuration."""


# ----------------------------------------------------------------------------
# nonlinearities


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not self.c >= 0:
            raise DomainError("Constant nonlinearity needs c >= 0")

    def f(self, u):
        return np.full(np.shape(u), float(self.c))

    def fprime(self, u):
        return np.zeros(np.shape(u))

    def lipschitz_bound(self, upper: float = 1.0) -> float:
        return 0.0

    @property
    def nondecreasing(self) -> bool:
        return True

    @property
    def f0_nonneg(self) -> bool:
        return self.c >= 0


@dataclass(frozen=True)
class Affine:
    a: float
    b: float

    def f(self, u):
        return self.a * np.asarray(u, dtype=float) + self.b

    def fprime(self, u):
        return np.full(np.shape(u), float(self.a))

    def lipschitz_bound(self, upper: float = 1.0) -> float:
        return abs(self.a)

    @property
    def nondecreasing(self) -> bool:
        return self.a >= 0

    @property
    def f0_nonneg(self) -> bool:
        return self.b >= 0


@dataclass(frozen=True)
class Power:
    """``amplitude * u_+^p`` on ``[0, inf)``."""

    p: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError("Power nonlinearity needs p > 1")

    def f(self, u):
        return self.amplitude * np.maximum(np.asarray(u, dtype=float), 0.0) ** self.p

    def fprime(self, u):
        return self.amplitude * self.p * np.maximum(np.asarray(u, dtype=float), 0.0) ** (self.p - 1.0)

    def lipschitz_bound(self, upper: float = 1.0) -> float:
        """Lipschitz constant on ``[0, upper]``."""
        return abs(self.amplitude) * self.p * upper ** (self.p - 1.0)

    @property
    def nondecreasing(self) -> bool:
        return self.amplitude >= 0

    @property
    def f0_nonneg(self) -> bool:
        return True


Nonlinearity = Union[Constant, Affine, Power]
_NL_TYPES = {"Constant": Constant, "Affine": Affine, "Power": Power}


def nonlinearity_from_dict(d: dict) -> Nonlinearity:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _NL_TYPES:
        raise ConfigError("nonlinearity.type", f"unknown nonlinearity {kind!r}")
    try:
        return _NL_TYPES[kind](**d)
    except TypeError as exc:
        raise ConfigError("nonlinearity", str(exc)) from None
    except DomainError as exc:
        raise ConfigError("nonlinearity", str(exc)) from None


def nonlinearity_to_dict(nl: Nonlinearity) -> dict:
    return {"type": type(nl).__name__, **nl.__dict__}


# ----------------------------------------------------------------------------
# sources and initial guesses


def _mesh_center(mesh: BallMesh) -> np.ndarray:
    return mesh.center.coords


def gaussian_source(mesh: BallMesh, amplitude: float = 1.0, scale: float = 1.0) -> Callable:
    """``amplitude * exp(-(rho/scale)^2)`` with ``rho`` the distance to the mesh center."""
    c = _mesh_center(mesh)

    def s(X):
        return amplitude * np.exp(-(ball_distance(X, c) / scale) ** 2)

    return s


def manufactured_solution(n: int, R: float, coeffs=(0.3, 0.2)):
    """Smooth ``u* = (R^2 - |x|^2)(1 + a x_1 + b x_2 x_3)`` and its image under ``P_1``.

    Returns ``(u, p1u)`` as callables on ball coordinates of shape ``(N, n)``.
    """
    a, b = coeffs
    if n < 3:
        raise DomainError("manufactured solution needs n >= 3")

    def q_parts(X):
        q = 1.0 + a * X[:, 0] + b * X[:, 1] * X[:, 2]
        gq = np.zeros_like(X)
        gq[:, 0] = a
        gq[:, 1] = b * X[:, 2]
        gq[:, 2] = b * X[:, 1]
        return q, gq

    def u(X):
        X = np.atleast_2d(X)
        q, _ = q_parts(X)
        return (R * R - np.sum(X * X, axis=1)) * q

    def p1u(X):
        X = np.atleast_2d(X)
        r2 = np.sum(X * X, axis=1)
        q, gq = q_parts(X)
        w = R * R - r2
        grad = -2.0 * X * q[:, None] + w[:, None] * gq
        lap = -2.0 * n * q - 4.0 * np.sum(X * gq, axis=1)
        xdg = np.sum(X * grad, axis=1)
        lb = 0.25 * (1.0 - r2) * ((1.0 - r2) * lap + 2.0 * (n - 2) * xdg)
        return -lb - 0.25 * n * (n - 2) * w * q

    return u, p1u


def make_source(desc, mesh: BallMesh, spec: KernelSpec = None) -> Optional[Callable]:
    if desc is None or callable(desc):
        return desc
    kind = desc.get("type")
    if kind == "gaussian":
        return gaussian_source(mesh, float(desc.get("amplitude", 1.0)), float(desc.get("scale", 1.0)))
    if kind == "constant":
        v = float(desc.get("value", 1.0))
        return lambda X: np.full(np.atleast_2d(X).shape[0], v)
    if kind == "manufactured":
        if not isinstance(spec, BoggioBall) or spec.k != 1:
            raise ConfigError("source.type", "manufactured source needs a BoggioBall kernel with k = 1")
        return manufactured_solution(spec.n, spec.R)[1]
    raise ConfigError("source.type", f"unknown source {kind!r}")


def initial_guess(desc, mesh: BallMesh) -> np.ndarray:
    P = mesh.points()
    if desc is None or desc.get("type", "zero") == "zero":
        return np.zeros(P.shape[0])
    kind = desc["type"]
    if kind == "constant":
        return np.full(P.shape[0], float(desc.get("value", 0.0)))
    if kind == "bump":
        c = np.asarray(desc.get("center"), dtype=float)
        if c.shape != (mesh.n,):
            raise ConfigError("initial.center", f"expected {mesh.n} coordinates")
        h = float(desc.get("height", 1.0))
        w = float(desc.get("width", 0.5))
        return h * np.exp(-(ball_distance(P, c) / w) ** 2)
    raise ConfigError("initial.type", f"unknown initial guess {kind!r}")


# ----------------------------------------------------------------------------
# configuration


@dataclass
class SolveConfig:
    kernel: KernelSpec
    mesh: BallMesh
    nonlinearity: Nonlinearity
    damping: float = 0.5
    initial: Optional[dict] = None
    max_iterations: int = 500
    tolerance: float = 1e-8
    source: Union[None, dict, Callable] = None
    threads: int = 1
    table_points_per_unit: int = 200

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ConfigError("damping", "must lie in (0, 1]")
        if not self.tolerance > 0:
            raise ConfigError("tolerance", "must be positive")
        if int(self.max_iterations) < 1:
            raise ConfigError("max_iterations", "must be at least 1")
        if self.kernel.n != self.mesh.n:
            raise ConfigError("mesh", f"kernel dimension {self.kernel.n} differs from mesh dimension {self.mesh.n}")
        if isinstance(self.kernel, BoggioBall):
            want = 2.0 * math.atanh(self.kernel.R)
            if np.any(self.mesh.center.coords) or abs(self.mesh.geodesic_radius - want) > 1e-12 * want:
                raise ConfigError("mesh", "BoggioBall needs the origin-centered mesh of geodesic radius 2 artanh(R)")

    @property
    def effective_damping(self) -> float:
        # the Picard map is constant for Constant f: one undamped step is exact
        return 1.0 if isinstance(self.nonlinearity, Constant) else self.damping

    @classmethod
    def from_dict(cls, d: dict) -> "SolveConfig":
        known = {"kernel", "mesh", "nonlinearity", "damping", "initial", "max_iterations", "tolerance", "source", "table_points_per_unit"}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown key")
        for key in ("kernel", "nonlinearity"):
            if key not in d:
                raise ConfigError(key, "missing")
        try:
            spec = spec_from_dict(d["kernel"])
        except (DomainError, TypeError, AttributeError) as exc:
            raise ConfigError("kernel", str(exc)) from None
        mesh = mesh_from_dict(d.get("mesh", {}), spec)
        cfg = cls(
            kernel=spec,
            mesh=mesh,
            nonlinearity=nonlinearity_from_dict(d["nonlinearity"]),
            damping=_num(d, "damping", 0.5),
            initial=d.get("initial"),
            max_iterations=int(_num(d, "max_iterations", 500)),
            tolerance=_num(d, "tolerance", 1e-8),
            source=d.get("source"),
            table_points_per_unit=int(_num(d, "table_points_per_unit", 200)),
        )
        if cfg.initial is not None and not isinstance(cfg.initial, dict):
            raise ConfigError("initial", "must be an object")
        if cfg.source is not None and not isinstance(cfg.source, dict):
            raise ConfigError("source", "must be an object")
        return cfg

    def to_dict(self) -> dict:
        return {
            "kernel": spec_to_dict(self.kernel),
            "mesh": mesh_to_dict(self.mesh, isinstance(self.kernel, BoggioBall)),
            "nonlinearity": nonlinearity_to_dict(self.nonlinearity),
            "damping": self.damping,
            "initial": self.initial,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "source": self.source if not callable(self.source) else "<callable>",
        }


def _num(d, key, default):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    return float(v)


def mesh_from_dict(d: dict, spec: KernelSpec) -> BallMesh:
    known = {"radius", "n_radial", "n_theta", "n_phi", "radial_panels", "center", "seed"}
    for key in d:
        if key not in known:
            raise ConfigError(f"mesh.{key}", "unknown key")
    if isinstance(spec, BoggioBall):
        radius = 2.0 * math.atanh(spec.R)
        if "radius" in d:
            raise ConfigError("mesh.radius", "implied by the BoggioBall radius")
    else:
        if "radius" not in d:
            raise ConfigError("mesh.radius", "whole-space kernels need a truncation radius")
        radius = _num(d, "radius", None)
    try:
        return make_ball_mesh(
            spec.n,
            radius,
            n_radial=int(_num(d, "n_radial", 16)),
            n_theta=int(_num(d, "n_theta", 8)),
            n_phi=int(d["n_phi"]) if "n_phi" in d else None,
            center=d.get("center"),
            radial_panels=int(_num(d, "radial_panels", 1)),
            seed=int(_num(d, "seed", 0)),
        )
    except (DomainError, ValueError) as exc:
        raise ConfigError("mesh", str(exc)) from None


def mesh_to_dict(mesh: BallMesh, implied_radius: bool = False) -> dict:
    """Inverse of :func:`mesh_from_dict`; ``implied_radius`` drops the radius (BoggioBall)."""
    lay = mesh.layout or {}
    out = {
        "radius": mesh.geodesic_radius,
        "n_radial": lay.get("n_radial_per_panel", mesh.n_radial),
        "n_theta": lay.get("n_theta"),
        "n_phi": lay.get("n_phi"),
        "radial_panels": lay.get("radial_panels", 1),
        "center": mesh.center.coords.tolist(),
    }
    if lay.get("seed") is not None:
        out["seed"] = lay["seed"]
    if implied_radius:
        del out["radius"]
    return out


def truncation_radius(spec: KernelSpec, tol: float = 1e-8, rho_max: float = 60.0) -> float:
    """Smallest radius ``T`` whose kernel tail ``int_{rho > T} K dV`` is below ``tol`` times the total.

    Raises ``DomainError`` when the kernel is not integrable at infinity; an
    explicit radius must then be supplied.
    """
    n = spec.n
    r = np.linspace(0.5, rho_max, 1200)
    dens = np.asarray(eval_kernel(spec, r)) * np.sinh(r) ** (n - 1)
    # growth rate of the density at the far end
    rate = (math.log(dens[-1]) - math.log(dens[-50])) / (r[-1] - r[-50])
    if rate >= -1e-3:
        raise DomainError("kernel is not integrable at infinity; give a truncation radius")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
    tail = cum[-1] - cum + dens[-1] / (-rate)
    total = cum[-1] + dens[-1] / (-rate)
    ok = np.flatnonzero(tail <= tol * total)
    return float(r[ok[0]])


# ----------------------------------------------------------------------------
# Nystrom operator


def _radial_profile(spec: KernelSpec, rho_hi: float) -> RadialProfile:
    rho = default_grid(700 if not isinstance(spec, Product) else 160, 1e-6, max(rho_hi, 1.0))
    return RadialProfile(spec, rho, np.asarray(eval_kernel(spec, rho)), 0.0)


def _sigma_hat(spec: KernelSpec) -> float:
    return 0.5 * spec.sigma


def _householder_to(axis: np.ndarray) -> np.ndarray:
    """Orthogonal matrix mapping the last basis vector to the unit vector ``axis``."""
    n = axis.size
    e = np.zeros(n)
    e[-1] = 1.0
    v = axis - e
    nv = float(v @ v)
    if nv < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(v, v) / nv


def _beta_rule(scale: float, m: int = 12):
    """Composite Gauss rule in the polar angle ``beta`` on ``[0, pi]``, graded toward ``pi/2``.

    ``scale`` is the width of the boundary-distance kink seen from a point
    close to the rim; panels shrink geometrically down to it.
    """
    half = 0.5 * math.pi
    edges = [0.0, half, math.pi]
    if scale < 0.25:
        w, marks = 0.25, []
        while w > 0.5 * scale:
            marks.append(w)
            w *= 0.25
        marks.append(w)
        edges = sorted({0.0, math.pi, half, *(half - t for t in marks), *(half + t for t in marks)})
    x, wx = gauss_legendre(m)
    nodes, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * (1.0 + x) + a)
        wts.append(0.5 * (b - a) * wx)
    return np.concatenate(nodes), np.concatenate(wts)


def _polar_directions(axis, n: int, scale: float, m_beta: int = 12, n_eta: int = 16):
    """Directions about ``axis`` with weights of ``S^{n-1}``: ``sin^{n-2} beta dbeta deta``."""
    if n < 3:
        raise DomainError("polar rule needs n >= 3")
    beta, wb = _beta_rule(scale, m_beta)
    if n - 1 >= 3:
        eta, we = sphere_rule(n - 1, n_eta // 2, n_eta)
    else:
        eta, we = sphere_rule(n - 1, n_eta, n_eta)
    cb, sb = np.cos(beta), np.sin(beta)
    local = np.concatenate(
        [sb[:, None, None] * eta[None, :, :], np.broadcast_to(cb[:, None, None], (beta.size, eta.shape[0], 1))],
        axis=2,
    ).reshape(-1, n)
    w = ((wb * sb ** (n - 2))[:, None] * we[None, :]).ravel()
    Q = _householder_to(np.asarray(axis, dtype=float))
    return local @ Q.T, w, np.repeat(cb, eta.shape[0])


def _monomials(D: np.ndarray, degree: int) -> np.ndarray:
    cols = []
    n = D.shape[1]
    for d in range(1, degree + 1):
        for idx in itertools.combinations_with_replacement(range(n), d):
            cols.append(np.prod(D[:, list(idx)], axis=1))
    return np.stack(cols, axis=1)


def _lagrange_matrix(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``L[q, j] = ell_j(x_q)`` for the Lagrange basis on nodes ``z`` (barycentric form)."""
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    lam = 1.0 / np.prod(diff, axis=1)
    dx = x[:, None] - z[None, :]
    hit = dx == 0.0
    dx[hit] = 1.0
    t = lam[None, :] / dx
    L = t / t.sum(axis=1, keepdims=True)
    rows = np.flatnonzero(hit.any(axis=1))
    for q in rows:
        L[q] = hit[q].astype(float)
    return L


def _legendre_table(u: np.ndarray, L: int) -> np.ndarray:
    """``P_l(u)`` for ``l = 0..L`` stacked on a leading axis."""
    P = np.empty((L + 1,) + u.shape)
    P[0] = 1.0
    if L >= 1:
        P[1] = u
    for l in range(1, L):
        P[l + 1] = ((2 * l + 1) * u * P[l] - l * P[l - 1]) / (l + 1)
    return P


_DEFAULT_DEGREE = {3: 4, 4: 3}


class KernelAccess:
    """Kernel evaluation shared by the discrete operators."""

    def __init__(self, spec: KernelSpec, mesh: BallMesh, threads: int = 1, points_per_unit: int = 200):
        if spec.n != mesh.n:
            raise ConfigError("mesh", "kernel/mesh dimension mismatch")
        if isinstance(spec, LegendreResolvent):
            raise ConfigError("kernel", "LegendreResolvent is not supported by the solver")
        self.spec = spec
        self.mesh = mesh
        self.threads = max(1, int(threads))
        self.points = mesh.points()
        self.weights = mesh.weights
        self.N = self.points.shape[0]
        self.is_boggio = isinstance(spec, BoggioBall)
        if not self.is_boggio:
            self.profile = _radial_profile(spec, 2.0 * mesh.geodesic_radius + 1.0)
            self.table = self.profile.uniform_table(points_per_unit)

    def _parallel(self, fn, items):
        items = list(items)
        if self.threads == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))

    def pairs(self, X, Y) -> np.ndarray:
        """Kernel matrix ``G(X_i, Y_j)``; coincident pairs give 0."""
        if self.is_boggio:
            s = self.spec
            G = _core.boggio_pairs(X, Y, s.n, s.k, s.R, False)
            return np.where(np.isfinite(G), G, 0.0)
        return _core.radial_table_pairs(X, Y, *self.table)

    def radial(self, rho) -> np.ndarray:
        """Radial kernel values consistent with the pair table."""
        return _core_py.hermite_log_table(np.asarray(rho, dtype=float), *self.table)

    def norm_inf(self) -> float:
        """Sup-norm operator norm; the kernels are positive, so this is ``max W``."""
        return float(np.max(np.abs(self.W)))

    def polar_rule(self, x, m_beta: int = 12, n_eta: int = 16, m_s: int = 40):
        """Nodes ``Y`` and kernel-weighted weights ``c`` with ``sum c h(Y) ~ int G(x, y) h(y) dV_y``."""
        x = np.asarray(x, dtype=float)
        n = self.mesh.n
        if self.is_boggio:
            R = self.spec.R
            r = float(np.linalg.norm(x))
            axis = x / r if r > 0 else np.eye(n)[-1]
            scale = math.sqrt(max(R * R - r * r, 0.0)) / r if r > 0 else 1.0
            dirs, wd, u = _polar_directions(axis, n, scale, m_beta, n_eta)
            smax = -r * u + np.sqrt(np.maximum(R * R - r * r * (1.0 - u * u), 0.0))
            xs, ws = gauss_legendre(m_s)
            sv = 0.5 * smax[:, None] * (1.0 + xs[None, :])
            Y = (x[None, None, :] + sv[:, :, None] * dirs[:, None, :]).reshape(-1, n)
            G = _core.boggio_pairs(x[None, :], Y, n, self.spec.k, R, False)[0]
            y2 = np.sum(Y * Y, axis=1)
            dens = G * (2.0 / (1.0 - y2)) ** n * sv.ravel() ** (n - 1)
            wts = (wd[:, None] * 0.5 * smax[:, None] * ws[None, :]).ravel()
            return Y, np.where(np.isfinite(dens), dens * wts, 0.0)
        c = self.mesh.center.coords
        T = self.mesh.geodesic_radius
        lc = mobius_apply(c[None, :], x[None, :])[0] if np.any(c) or np.any(x) else np.zeros(n)
        lr = float(np.linalg.norm(lc))
        r = float(ball_distance(x[None, :], c[None, :])[0]) if lr > 0 else 0.0
        axis = -lc / lr if lr > 0 else np.eye(n)[-1]
        A, C = math.cosh(r), math.cosh(T)
        scale = math.sqrt(max(C * C - A * A, 0.0)) / math.sinh(r) if r > 0 else 1.0
        dirs, wd, u = _polar_directions(axis, n, scale, m_beta, n_eta)
        B = u * math.sinh(r)
        X = (C + np.sqrt(np.maximum(C * C - (A * A - B * B), 0.0))) / (A + B)
        smax = np.log(X)
        beta = self.spec.sigma - 1.0
        jac = abs(beta) > 1e-12
        xs, ws = gauss_jacobi(m_s, 0.0, beta) if jac else gauss_legendre(m_s)
        h = 0.5 * smax[:, None]
        sv = h * (1.0 + xs[None, :])
        wts = wd[:, None] * ws[None, :] * h ** (1.0 + (beta if jac else 0.0))
        dens = self.radial(sv) * np.sinh(sv) ** (n - 1)
        if jac:
            dens = dens / sv ** beta
        local = np.tanh(0.5 * sv)[:, :, None] * dirs[:, None, :]
        Y = local.reshape(-1, n)
        if np.any(x):
            Y = mobius_apply(Y, -x[None, :])
        return Y, (wts * dens).ravel()

    def dense_matrix(self) -> np.ndarray:
        """Matrix of the discrete operator (columns are images of unit vectors); testing aid."""
        M = np.empty((self.N, self.N))
        e = np.zeros(self.N)
        for j in range(self.N):
            e[j] = 1.0
            M[:, j] = self.apply(e)
            e[j] = 0.0
        return M


class NystromOperator(KernelAccess):
    """Point-sampled discrete operator ``g -> int G(., y) g(y) dV_y`` for any polar mesh.

    The diagonal is replaced by the accurately integrated ``W_i`` (singularity
    subtraction) and near-diagonal weights are adjusted so that each row
    integrates ``G(x_i, y) p(y - x_i)`` exactly for monomials ``p`` up to
    ``correction_degree``, with moments from a polar rule centered at ``x_i``.

    Point sampling needs the kernel to vary slowly across mesh cells; on
    large geodesic balls (cells wider than the kernel decay length) use
    :class:`HarmonicOperator`.

    Parameters
    ----------
    spec : KernelSpec
    mesh : BallMesh
    threads : int
        Row-block parallelism for assembly; results do not depend on it.
    correction_degree : int, optional
        0 disables the local correction. Defaults to 4 for ``n = 3``, 3 for
        ``n = 4`` and 2 above.
    """

    kind = "nystrom"

    def __init__(self, spec: KernelSpec, mesh: BallMesh, threads: int = 1, points_per_unit: int = 200,
                 correction_degree: Optional[int] = None):
        super().__init__(spec, mesh, threads, points_per_unit)
        self.degree = _DEFAULT_DEGREE.get(mesh.n, 2) if correction_degree is None else int(correction_degree)
        M = mesh.n_angular
        if np.any(mesh.center.coords) and not self.is_boggio:
            W = self._parallel(lambda i: float(np.sum(self.polar_rule(self.points[i])[1])), range(self.N))
            self.W = np.array(W)
        else:
            shell_W = self._parallel(lambda i: float(np.sum(self.polar_rule(self.points[i * M])[1])), range(mesh.n_radial))
            self.W = np.repeat(np.array(shell_W), M)
        self._cell = self._cell_sizes()
        A = np.concatenate(self._parallel(lambda b: self.pairs(self.points[b], self.points),
                                          np.array_split(np.arange(self.N), max(1, min(self.threads * 4, self.N)))), axis=0)
        np.fill_diagonal(A, 0.0)
        A *= self.weights[None, :]
        if self.degree > 0:
            A = np.stack(self._parallel(lambda i: self._correct_row(i, A[i]), range(self.N)), axis=0)
        self.A = A
        self.rowsum = A.sum(axis=1)
        self.diag = self.W - self.rowsum

    def _cell_sizes(self) -> np.ndarray:
        """Largest local spacing (radial or angular) at each node, Euclidean."""
        mesh, P = self.mesh, self.points
        M, nr = mesh.n_angular, mesh.n_radial
        Pr = P.reshape(nr, M, -1)
        dr = np.zeros((nr, M))
        if nr > 1:
            step = np.linalg.norm(np.diff(Pr, axis=0), axis=2)
            dr[:-1] = step
            dr[1:] = np.maximum(dr[1:], step)
        D = mesh.angular_nodes
        cosang = D @ D.T
        np.fill_diagonal(cosang, -2.0)
        k = min(4, M - 1)
        nn = np.argpartition(-cosang, k - 1, axis=1)[:, :k]
        ang = np.arccos(np.clip(np.take_along_axis(cosang, nn, axis=1), -1.0, 1.0))
        theta_max = float(np.max(ang))
        # Euclidean length per radian at each node times the coarsest angular gap
        scale = np.zeros((nr, M))
        for j in range(k):
            scale = np.maximum(scale, np.linalg.norm(Pr - Pr[:, nn[:, j], :], axis=2) / ang[None, :, j])
        return np.maximum(dr, scale * theta_max).ravel()

    def _correct_row(self, i: int, row: np.ndarray) -> np.ndarray:
        """Moment-fitting correction of one matrix row (weights already applied)."""
        deg = self.degree
        x = self.points[i]
        h = self._cell[i]
        Y, c = self.polar_rule(x)
        mu = _monomials((Y - x) / h, deg).T @ c
        d2 = np.sum((self.points - x) ** 2, axis=1)
        d2[i] = np.inf
        count = int(np.sum(d2 <= (2.0 * h) ** 2))
        order = np.argsort(d2, kind="stable")
        nb = order[: min(max(3 * mu.size, count), 800, self.N - 1)]
        Mall = _monomials((self.points - x) / h, deg)
        resid = mu - Mall.T @ row
        w = self.weights[nb]
        delta = w * np.linalg.lstsq(Mall[nb].T * w[None, :], resid, rcond=None)[0]
        out = row.copy()
        out[nb] += delta
        return out

    def apply(self, g) -> np.ndarray:
        """``K[g]`` at the nodes with the singularity-subtracted diagonal."""
        g = np.asarray(g, dtype=float)
        return np.einsum("ij,j->i", self.A, g) + self.diag * g


class HarmonicOperator(KernelAccess):
    """Discrete operator for origin-centered ``n = 3`` meshes (GL x uniform angles).

    The rotation-invariant kernel is expanded in Legendre modes,

        G(x, y) = sum_l (2l+1)/(4 pi) k_l(|x|, |y|) P_l(cos gamma),

    with ``k_l(r, rho) = 2 pi int G P_l du`` integrated in the geodesic
    distance. Angular data go through the exact spherical-harmonic transform
    of the grid (degree ``< n_theta``), and each mode is integrated radially
    against the per-panel Lagrange basis with weights graded into the
    ``rho = r`` singularity. Radial data stay exactly radial, and the
    kernel's decay length never has to be resolved by the angular grid.
    """

    kind = "harmonic"

    def __init__(self, spec: KernelSpec, mesh: BallMesh, threads: int = 1, points_per_unit: int = 200,
                 levels: int = 20, m: int = 12):
        super().__init__(spec, mesh, threads, points_per_unit)
        if not harmonic_compatible(mesh):
            raise ConfigError("mesh", "harmonic operator needs an origin-centered n = 3 GL x uniform mesh")
        lay = mesh.layout
        self.nt, self.nphi = int(lay["n_theta"]), int(lay["n_phi"])
        self.nr = mesh.n_radial
        self.L = min(self.nt - 1, self.nphi // 2 - 1)
        self.levels, self.m = levels, m
        self._angular_tables()
        self.Q = self._radial_weights()
        self.W = self.apply(np.ones(self.N))

    def _angular_tables(self):
        d = self.mesh.angular_nodes.reshape(self.nt, self.nphi, 3)
        u = d[:, 0, 2]
        wt = self.mesh.angular_weights.reshape(self.nt, self.nphi)[:, 0] / (2.0 * math.pi / self.nphi)
        theta = np.arccos(np.clip(u, -1.0, 1.0))
        L = self.L
        Y = np.zeros((L + 1, L + 1, self.nt))  # [m, l, t]
        for mm in range(L + 1):
            for l in range(mm, L + 1):
                Y[mm, l] = special.sph_harm_y(l, mm, theta, 0.0).real
        self._Y = Y
        self._wt = wt

    def _panels(self):
        lay = self.mesh.layout
        panels = int(lay.get("radial_panels", 1))
        per = int(lay.get("n_radial_per_panel", self.nr))
        edges = np.linspace(0.0, self.mesh.geodesic_radius, panels + 1)
        return edges, per

    def _rho_rule(self, r, a, b):
        """Nodes on ``[a, b]`` graded toward ``r`` when it is inside or close."""
        lv, m = self.levels, self.m
        if a < r < b:
            x1, w1, _, _ = graded_rule(a, r, False, 0.0, lv, m)
            x2, w2, _, _ = graded_rule(r, b, True, 0.0, lv, m)
            return np.concatenate([x1, x2]), np.concatenate([w1, w2])
        dist = min(abs(r - a), abs(r - b))
        if dist < (b - a):
            at_lo = abs(r - a) <= abs(r - b)
            lvl = int(min(lv, max(2, math.ceil(math.log((b - a) / max(dist, 1e-300)) / math.log(4.0)) + 2)))
            x, w, _, _ = graded_rule(a, b, at_lo, 0.0, lvl, m)
            return x, w
        x, w = gauss_legendre(2 * m)
        return 0.5 * (b - a) * (1.0 + x) + a, 0.5 * (b - a) * w

    def _mode_kernels(self, r, rho):
        """``k_l(r, rho)`` for ``l <= L`` at a vector of ``rho`` values."""
        L, m = self.L, self.m
        out = np.zeros((L + 1, rho.size))
        shr = math.sinh(r)
        for q, p in enumerate(rho):
            delta = abs(r - p)
            span = (r + p) - delta
            lvl = int(min(30, max(2, math.ceil(math.log(span / max(0.05 * delta, 1e-300)) / math.log(4.0)))))
            t, wt, _, _ = graded_rule(0.0, span, True, 0.0, lvl, m)
            d = delta + t
            shp = math.sinh(p)
            one_minus_u = 2.0 * np.sinh(0.5 * (d + delta)) * np.sinh(0.5 * t) / (shr * shp)
            u = 1.0 - one_minus_u
            if self.is_boggio:
                K = self._boggio_ru(r, p, u, one_minus_u)
            else:
                K = self.radial(d)
            f = K * np.sinh(d)
            P = _legendre_table(u, L)
            out[:, q] = (2.0 * math.pi / (shr * shp)) * (P @ (wt * f))
        return out

    def _boggio_ru(self, r, p, u, one_minus_u):
        s = self.spec
        x = np.array([[0.0, 0.0, math.tanh(0.5 * r)]])
        e = math.tanh(0.5 * p)
        sin = np.sqrt(np.maximum(one_minus_u * (1.0 + u), 0.0))
        Y = np.stack([e * sin, np.zeros_like(u), e * u], axis=1)
        G = _core.boggio_pairs(x, Y, 3, s.k, s.R, False)[0]
        return np.where(np.isfinite(G), G, 0.0)

    def _radial_weights(self):
        edges, per = self._panels()
        z_all = self.mesh.radial_nodes
        rows = self._parallel(lambda i: self._radial_row(z_all[i], edges, per), range(self.nr))
        return np.stack(rows, axis=1)  # [l, i, b]

    def _radial_row(self, r, edges, per):
        z_all = self.mesh.radial_nodes
        row = np.zeros((self.L + 1, self.nr))
        for p in range(edges.size - 1):
            a, b = edges[p], edges[p + 1]
            cols = np.arange(p * per, (p + 1) * per)
            x, w = self._rho_rule(r, a, b)
            Lag = _lagrange_matrix(z_all[cols], x)
            k = self._mode_kernels(r, x)
            row[:, cols] = (k * (w * np.sinh(x) ** 2)[None, :]) @ Lag
        return row

    def apply(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float).reshape(self.nr, self.nt, self.nphi)
        L = self.L
        gm = np.fft.rfft(g, axis=2)[:, :, : L + 1] * (2.0 * math.pi / self.nphi)  # [b, t, m]
        glm = np.einsum("mlt,t,btm->blm", self._Y, self._wt, gm)
        olm = np.einsum("lib,blm->ilm", self.Q, glm)
        om = np.einsum("mlt,ilm->itm", self._Y, olm)
        H = np.zeros((self.nr, self.nt, self.nphi // 2 + 1), dtype=complex)
        H[:, :, : L + 1] = om
        return (np.fft.irfft(H, n=self.nphi, axis=2) * self.nphi).ravel()


def harmonic_compatible(mesh: BallMesh) -> bool:
    lay = mesh.layout or {}
    if mesh.n != 3 or lay.get("rule") != "gl-x-uniform" or np.any(mesh.center.coords):
        return False
    panels = int(lay.get("radial_panels", 1))
    per = int(lay.get("n_radial_per_panel", mesh.n_radial))
    if panels * per != mesh.n_radial or mesh.n_angular != int(lay["n_theta"]) * int(lay["n_phi"]):
        return False
    rn, _ = panel_rule(np.linspace(0.0, mesh.geodesic_radius, panels + 1), per)
    return bool(np.allclose(rn, mesh.radial_nodes, rtol=0, atol=1e-13))


def make_operator(spec: KernelSpec, mesh: BallMesh, threads: int = 1, points_per_unit: int = 200, method: str = "auto"):
    """Pick :class:`HarmonicOperator` when the mesh allows it, else :class:`NystromOperator`."""
    if method not in ("auto", "harmonic", "nystrom"):
        raise ConfigError("method", f"unknown operator {method!r}")
    if method == "harmonic" or (method == "auto" and harmonic_compatible(mesh)):
        return HarmonicOperator(spec, mesh, threads, points_per_unit)
    return NystromOperator(spec, mesh, threads, points_per_unit)


# ----------------------------------------------------------------------------
# Picard iteration


@dataclass
class SolveResult:
    u: np.ndarray
    residual_history: np.ndarray
    converged: bool
    contraction_proxy: float
    iterations: int
    diagnostic: str
    points: np.ndarray = field(repr=False, default=None)
    operator_norm: float = float("nan")

    def summary(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "diagnostic": self.diagnostic,
            "contraction_proxy": _finite(self.contraction_proxy),
            "operator_norm": _finite(self.operator_norm),
            "final_update": _finite(self.residual_history[-1]) if self.residual_history.size else None,
            "residual_history": [_finite(v) for v in self.residual_history],
            "u_max": _finite(np.max(np.abs(self.u))) if self.u.size else None,
        }

    def to_csv(self) -> str:
        n = self.points.shape[1]
        head = ",".join([f"x{i + 1}" for i in range(n)] + ["u"])
        rows = [head]
        for p, v in zip(self.points, self.u):
            rows.append(",".join(repr(float(c)) for c in (*p, v)))
        return "\n".join(rows) + "\n"


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _rhs(cfg: SolveConfig, src_vals):
    nl = cfg.nonlinearity

    def g(u):
        out = nl.f(u)
        return out + src_vals if src_vals is not None else out

    return g


def solve_integral_equation(cfg: SolveConfig, operator=None) -> SolveResult:
    """Damped Picard iteration ``u <- (1 - w) u + w K[f(u) + s]``.

    Stops when the sup-norm update drops below ``tol (1 + |u|_inf)``. An
    update that grows for 10 consecutive iterations, or a non-finite iterate,
    ends the run with ``converged = False``.
    """
    op = operator or make_operator(cfg.kernel, cfg.mesh, cfg.threads, cfg.table_points_per_unit)
    src = make_source(cfg.source, cfg.mesh, cfg.kernel)
    src_vals = None if src is None else np.asarray(src(op.points), dtype=float)
    g = _rhs(cfg, src_vals)
    u = initial_guess(cfg.initial, cfg.mesh)
    w = cfg.effective_damping
    hist = []
    grow = 0
    converged = False
    diag = "max_iterations reached"
    for it in range(1, int(cfg.max_iterations) + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            new = (1.0 - w) * u + w * op.apply(g(u))
            upd = float(np.max(np.abs(new - u)))
        if not np.all(np.isfinite(new)) or not math.isfinite(upd):
            hist.append(float("inf"))
            diag = f"diverged: non-finite iterate at iteration {it}"
            break
        grow = grow + 1 if hist and upd > hist[-1] else 0
        hist.append(upd)
        u = new
        if upd <= cfg.tolerance * (1.0 + float(np.max(np.abs(u)))):
            converged = True
            diag = f"converged in {it} iterations"
            break
        if grow >= 10:
            diag = f"diverged: update grew for 10 consecutive iterations (iteration {it})"
            break
    proxy = contraction_proxy(cfg, u) if np.all(np.isfinite(u)) else float("inf")
    return SolveResult(u, np.array(hist), converged, proxy, len(hist), diag, op.points, op.norm_inf())


def contraction_proxy(cfg: SolveConfig, u) -> float:
    """``C_HLS ||f'(u)||_{L^q} / gamma(2 sigma_hat)`` with ``q = n / (2 sigma_hat)``."""
    n = cfg.kernel.n
    sh = _sigma_hat(cfg.kernel)
    q = n / (2.0 * sh)
    fp = np.abs(cfg.nonlinearity.fprime(np.asarray(u, dtype=float)))
    if not np.any(fp):
        return 0.0
    norm = float(np.dot(fp ** q, cfg.mesh.weights)) ** (1.0 / q)
    lam = n - 2.0 * sh
    return norm * hls_constant(n, lam) / gamma_norm(n, 2.0 * sh)


def neumann_oracle(op, eps: float, terms: int = 40) -> np.ndarray:
    """``sum_m (eps K)^m K[1]``: fixed point of ``u = K[eps u + 1]``."""
    term = op.apply(np.ones(op.N))
    total = term.copy()
    for _ in range(terms):
        term = eps * op.apply(term)
        total += term
    return total


# ----------------------------------------------------------------------------
# conformal transfers


@dataclass
class TransferredNonlinearity:
    expression: str
    func: Callable


def _phi(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return 0.5 * (1.0 - np.sum(X * X, axis=1))


def conformal_transfer(values, X, direction: str, n: int, k: int) -> np.ndarray:
    """Map between ``P_k u = f(u)`` on the ball and ``(-Delta)^k v = g(|x|, v)``.

    ``to_euclidean``: ``v = phi^{k - n/2} u``; ``to_hyperbolic``: the inverse,
    with ``phi = (1 - |x|^2)/2``.
    """
    p = _phi(X)
    e = k - 0.5 * n
    vals = np.asarray(values, dtype=float)
    if direction == "to_euclidean":
        return vals * p ** e
    if direction == "to_hyperbolic":
        return vals * p ** (-e)
    raise DomainError(f"unknown direction {direction!r}")


def transferred_nonlinearity(nl: Nonlinearity, n: int, k: int) -> TransferredNonlinearity:
    """``g(|x|, v) = (2/(1-|x|^2))^{k+n/2} f(phi^{n/2-k} v)`` for the built-in tags."""
    a_out = k + 0.5 * n
    e_in = 0.5 * n - k

    def func(X, v):
        p = _phi(X)
        return p ** (-a_out) * nl.f(p ** e_in * np.asarray(v, dtype=float))

    lam = "(2/(1-|x|^2))"
    if isinstance(nl, Constant):
        expr = f"{nl.c!r}*{lam}^{a_out!r}"
    elif isinstance(nl, Affine):
        expr = f"{nl.a!r}*{lam}^{2 * k!r}*v + {nl.b!r}*{lam}^{a_out!r}"
    else:
        ex = a_out - e_in * nl.p
        expr = f"{nl.amplitude!r}*{lam}^{ex!r}*v_+^{nl.p!r}"
    return TransferredNonlinearity(expr, func)


HALFSPACE_THRESHOLD = 1e-8


def halfspace_transfer(values, Y, direction: str, n: int, k: int, threshold: float = HALFSPACE_THRESHOLD) -> np.ndarray:
    """``w = x_n^{k - n/2} u`` on the upper half-space (``to_euclidean``) and its inverse."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    xn = Y[:, -1]
    if np.any(xn < threshold):
        raise DomainError(f"x_n below {threshold} in half-space transfer")
    e = k - 0.5 * n
    vals = np.asarray(values, dtype=float)
    if direction == "to_euclidean":
        return vals * xn ** e
    if direction == "to_hyperbolic":
        return vals * xn ** (-e)
    raise DomainError(f"unknown direction {direction!r}")


def halfspace_rhs(nl: Nonlinearity, Y, w, n: int, k: int) -> np.ndarray:
    """Right side ``x_n^{-k-n/2} f(x_n^{n/2-k} w)`` of the transferred half-space equation."""
    xn = np.atleast_2d(np.asarray(Y, dtype=float))[:, -1]
    return xn ** (-k - 0.5 * n) * nl.f(xn ** (0.5 * n - k) * np.asarray(w, dtype=float))


# ----------------------------------------------------------------------------
# k = 1 residual check


def evaluate_solution(result: SolveResult, cfg: SolveConfig, X, operator: "KernelAccess" = None) -> np.ndarray:
    """Evaluate ``int G(x, y) [f(u(y)) + s(y)] dV_y`` at off-mesh points.

    Uses the polar rule centered at each ``x``, so the result is smooth in
    ``x``; ``u`` enters only through the mesh interpolant inside ``f``.
    """
    op = operator or KernelAccess(cfg.kernel, cfg.mesh, cfg.threads, cfg.table_points_per_unit)
    src = make_source(cfg.source, cfg.mesh, cfg.kernel)
    nl = cfg.nonlinearity
    depends_on_u = not isinstance(nl, Constant) and not (isinstance(nl, Affine) and nl.a == 0)
    field_u = MeshField(cfg.mesh, result.u, 0.0) if depends_on_u else None

    def g(Y):
        uu = field_u(Y) if field_u is not None else np.zeros(Y.shape[0])
        out = nl.f(uu)
        return out + src(Y) if src is not None else out

    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        Y, c = op.polar_rule(x)
        out[i] = float(np.dot(c, g(Y)))
    return out


def p1_stencil(func: Callable, X, h: float, n: int) -> np.ndarray:
    """Central-difference ``P_1 = -Delta_H - n(n-2)/4`` on the ball model."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    pts = [X]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        pts += [X + e, X - e]
    vals = func(np.concatenate(pts, axis=0)).reshape(2 * n + 1, N)
    u0 = vals[0]
    lap = np.zeros(N)
    xdg = np.zeros(N)
    for i in range(n):
        up, um = vals[1 + 2 * i], vals[2 + 2 * i]
        lap += (up - 2.0 * u0 + um) / (h * h)
        xdg += X[:, i] * (up - um) / (2.0 * h)
    r2 = np.sum(X * X, axis=1)
    lb = 0.25 * (1.0 - r2) * ((1.0 - r2) * lap + 2.0 * (n - 2) * xdg)
    return -lb - 0.25 * n * (n - 2) * u0


def residual_patch(n: int, center=None, half_width: float = 0.1, points_per_side: int = 3) -> np.ndarray:
    """Regular grid patch of stencil centers (interior points)."""
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    ax = np.linspace(-half_width, half_width, points_per_side)
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    return c[None, :] + np.stack([g.ravel() for g in grids], axis=1)


def pde_residual_check(result: SolveResult, cfg: SolveConfig, h: float = 0.04, center=None,
                       half_width: float = 0.1, points_per_side: int = 3, operator=None) -> dict:
    """Relative residual ``max |P_1 u - f(u) - s| / max |f(u) + s|`` on a grid patch."""
    spec = cfg.kernel
    if not isinstance(spec, BoggioBall) or spec.k != 1:
        raise UnsupportedCaseError("the finite-difference residual is defined for k = 1 Dirichlet balls only")
    n = spec.n
    X = residual_patch(n, center, half_width, points_per_side)
    if np.max(np.linalg.norm(X, axis=1)) + h >= spec.R:
        raise DomainError("stencil patch leaves the ball")
    op = operator or KernelAccess(spec, cfg.mesh, cfg.threads)
    lhs = p1_stencil(lambda Y: evaluate_solution(result, cfg, Y, op), X, h, n)
    src = make_source(cfg.source, cfg.mesh, spec)
    uu = MeshField(cfg.mesh, result.u, 0.0)(X)
    rhs = cfg.nonlinearity.f(uu) + (src(X) if src is not None else 0.0)
    scale = float(np.max(np.abs(rhs)))
    err = float(np.max(np.abs(lhs - rhs)))
    rel = 0.0 if err == 0.0 else err / (scale if scale > 0 else 1.0)
    return {"residual": rel, "absolute": err, "h": h, "points": int(X.shape[0])}


def observed_order(result: SolveResult, cfg: SolveConfig, hs=(0.08, 0.04, 0.02), **kw) -> dict:
    """Residuals at several spacings and the least-squares order in ``h``."""
    if "operator" not in kw:
        kw["operator"] = KernelAccess(cfg.kernel, cfg.mesh, cfg.threads)
    res = [pde_residual_check(result, cfg, h, **kw)["residual"] for h in hs]
    lh, lr = np.log(hs), np.log(res)
    slope = float(np.polyfit(lh, lr, 1)[0])
    return {"h": list(hs), "residual": res, "order": slope}


# ----------------------------------------------------------------------------
# serialisation


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]
