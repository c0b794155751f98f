"""Quadrature on geodesic balls and on all of ``H^n``.

Radial integrals use composite Gauss-Legendre panels graded geometrically
toward the origin. Geodesic balls are discretised as radial Gauss-Legendre
shells times an angular rule on ``S^{n-1}``; the rule is invariant under every
coordinate reflection so the reflection ``x_i -> -x_i`` permutes nodes.

Radial convolution uses bipolar coordinates ``a = d(x, y)``, ``b = d(0, y)``
and the rotated variables ``p = a + b``, ``q = a - b``::

    (f * g)(r) = |S^{n-2}| / (2 sinh^{n-2} r) int_r^inf int_{-r}^{r}
                 f(a) g(b) sinh a sinh b [(cosh p - cosh r)(cosh r - cosh q)]^{(n-3)/2} dq dp
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.stats import qmc

from .geom import BallPoint, mobius_apply, sphere_area
from .specfun import DomainError


class EvaluationError(ArithmeticError):
    """Integrand returned a non-finite value."""


@lru_cache(maxsize=None)
def gauss_legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


@lru_cache(maxsize=None)
def gauss_jacobi(m: int, alpha: float, beta: float):
    """Nodes/weights on ``[-1, 1]`` for weight ``(1-x)^alpha (1+x)^beta``."""
    x, w = special.roots_jacobi(m, alpha, beta)
    return x, w


def panel_rule(edges, m: int = 16):
    """Composite Gauss-Legendre nodes and weights over consecutive ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(m)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    wts = 0.5 * (hi - lo) * w[None, :]
    return nodes.ravel(), wts.ravel()


def radial_integral(
    n: int,
    f: Callable,
    rho_max: float,
    singular_exponent: Optional[float] = None,
    rtol: float = 1e-13,
    m: int = 16,
) -> float:
    """``|S^{n-1}| int_0^{rho_max} f(rho) sinh^{n-1}(rho) drho``.

    Parameters
    ----------
    n : int
        Dimension.
    f : callable
        Vectorised radial integrand.
    rho_max : float
        Upper limit, possibly ``inf``; infinite ranges are truncated once
        panel contributions fall below ``rtol`` of the running total.
    singular_exponent : float, optional
        ``sigma`` such that ``|f| <~ rho^{-(n - sigma)}`` near 0. The integral
        diverges when ``sigma <= 0``.
    """
    if singular_exponent is not None and singular_exponent <= 0:
        raise DomainError(f"integrand ~ rho^-(n-{singular_exponent}) is not integrable at 0")
    if rho_max <= 0:
        return 0.0
    area = sphere_area(n)

    def weighted(r):
        v = np.asarray(f(r), dtype=float) * np.sinh(r) ** (n - 1)
        if not np.all(np.isfinite(v)):
            raise EvaluationError("non-finite radial integrand")
        return v

    levels = 45 if singular_exponent is not None else 20
    head_end = min(rho_max, 1.0)
    edges = head_end * 0.3 ** np.arange(levels, -1, -1)
    nodes, wts = panel_rule(np.concatenate([[0.0], edges]), m)
    total = float(np.dot(weighted(nodes), wts))
    if singular_exponent is not None:
        eps = edges[0]
        total += float(weighted(np.array([eps]))[0]) * eps / singular_exponent
    if rho_max == head_end:
        return area * total
    finite = math.isfinite(rho_max)
    lo = head_end
    width = 0.5
    for _ in range(4000):
        hi = min(lo + width, rho_max) if finite else lo + width
        nodes, wts = panel_rule(np.array([lo, hi]), m)
        part = float(np.dot(weighted(nodes), wts))
        total += part
        lo = hi
        if finite and lo >= rho_max:
            break
        if not finite and abs(part) <= rtol * abs(total) and lo > 5.0:
            break
        if lo > 700.0:
            break
    return area * total


# ----------------------------------------------------------------------------
# meshes


def _sphere_rule_3(n_theta: int, n_phi: int):
    u, wu = gauss_legendre(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - u * u)
    dirs = np.stack(
        [
            (st[:, None] * np.cos(phi)[None, :]).ravel(),
            (st[:, None] * np.sin(phi)[None, :]).ravel(),
            np.repeat(u, n_phi),
        ],
        axis=1,
    )
    w = np.repeat(wu, n_phi) * (2.0 * np.pi / n_phi)
    return dirs, w


def _sphere_rule_4(n_theta: int, n_phi: int):
    # omega = (cos t1, sin t1 * omega_2), omega_2 on S^2; measure sin^2 t1 dt1 dsigma_2
    u1, w1 = gauss_jacobi(n_theta, 0.5, 0.5)
    d2, w2 = _sphere_rule_3(n_theta, n_phi)
    s1 = np.sqrt(1.0 - u1 * u1)
    dirs = np.concatenate(
        [
            np.repeat(u1, len(w2))[:, None],
            (s1[:, None, None] * d2[None, :, :]).reshape(-1, 3),
        ],
        axis=1,
    )
    # put the Gegenbauer axis last so the azimuth again lives in (x1, x2)
    dirs = dirs[:, [1, 2, 3, 0]]
    w = (w1[:, None] * w2[None, :]).ravel()
    return dirs, w


def _sphere_rule_lowdisc(n: int, count: int, seed: int = 0):
    sob = qmc.Sobol(d=n, scramble=True, seed=seed)
    base = special.ndtri(np.clip(sob.random(count), 1e-12, 1 - 1e-12))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij")).reshape(n, -1).T
    dirs = (base[None, :, :] * signs[:, None, :]).reshape(-1, n)
    w = np.full(dirs.shape[0], sphere_area(n) / dirs.shape[0])
    return dirs, w


def sphere_rule(n: int, n_theta: int = 8, n_phi: Optional[int] = None, seed: int = 0):
    """Angular rule on ``S^{n-1}`` with weights summing to its area."""
    if n_phi is None:
        n_phi = 2 * n_theta
    if n_phi % 2:
        raise ValueError("n_phi must be even for reflection symmetry")
    if n == 2:
        phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
        return np.stack([np.cos(phi), np.sin(phi)], 1), np.full(n_phi, 2.0 * np.pi / n_phi)
    if n == 3:
        return _sphere_rule_3(n_theta, n_phi)
    if n == 4:
        return _sphere_rule_4(n_theta, n_phi)
    return _sphere_rule_lowdisc(n, max(n_theta, 1), seed)


@dataclass
class BallMesh:
    """Polar quadrature mesh of a geodesic ball.

    Nodes are ordered radial-major: node ``i * M + j`` sits at geodesic
    distance ``radial_nodes[i]`` from ``center`` in direction
    ``angular_nodes[j]``.
    """

    n: int
    center: BallPoint
    geodesic_radius: float
    radial_nodes: np.ndarray
    radial_weights: np.ndarray
    angular_nodes: np.ndarray
    angular_weights: np.ndarray
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radial_nodes = np.asarray(self.radial_nodes, dtype=float)
        self.radial_weights = np.asarray(self.radial_weights, dtype=float)
        self.angular_nodes = np.asarray(self.angular_nodes, dtype=float)
        self.angular_weights = np.asarray(self.angular_weights, dtype=float)
        if self.center.n != self.n or self.angular_nodes.shape[1] != self.n:
            raise DomainError("mesh dimension mismatch")
        r = self.radial_nodes
        if np.any(np.diff(r) <= 0) or r[0] <= 0 or r[-1] >= self.geodesic_radius:
            raise DomainError("radial nodes must increase strictly inside (0, radius)")
        if np.any(self.weights <= 0):
            raise DomainError("mesh weights must be positive")

    @property
    def n_radial(self) -> int:
        return self.radial_nodes.size

    @property
    def n_angular(self) -> int:
        return self.angular_weights.size

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    @property
    def weights(self) -> np.ndarray:
        wr = self.radial_weights * np.sinh(self.radial_nodes) ** (self.n - 1)
        return (wr[:, None] * self.angular_weights[None, :]).ravel()

    @property
    def rho(self) -> np.ndarray:
        """Geodesic distance of each node from the center."""
        return np.repeat(self.radial_nodes, self.n_angular)

    def points(self) -> np.ndarray:
        """Ball coordinates of all nodes, shape ``(size, n)``."""
        e = np.tanh(0.5 * self.radial_nodes)
        local = (e[:, None, None] * self.angular_nodes[None, :, :]).reshape(-1, self.n)
        c = self.center.coords
        if not np.any(c):
            return local
        return mobius_apply(local, -c)

    def volume(self) -> float:
        return float(np.sum(self.weights))

    def exact_volume(self) -> float:
        return radial_integral(self.n, lambda r: np.ones_like(r), self.geodesic_radius)

    def euclidean_radius(self) -> float:
        return math.tanh(0.5 * self.geodesic_radius)

    # -- serialisation -------------------------------------------------------

    def to_text(self) -> str:
        header = {
            "format": "hypgreen-ballmesh",
            "version": 1,
            "n": self.n,
            "geodesic_radius": repr(float(self.geodesic_radius)),
            "center": [repr(float(c)) for c in self.center.coords],
            "n_radial": self.n_radial,
            "n_angular": self.n_angular,
            "layout": self.layout,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for r, w in zip(self.radial_nodes, self.radial_weights):
            lines.append(f"R {float(r)!r} {float(w)!r}")
        for d, w in zip(self.angular_nodes, self.angular_weights):
            lines.append("A " + " ".join(repr(float(v)) for v in (w, *d)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BallMesh":
        lines = text.strip().splitlines()
        h = json.loads(lines[0])
        if h.get("format") != "hypgreen-ballmesh" or h.get("version") != 1:
            raise ValueError("not a version-1 BallMesh document")
        rad = [list(map(float, ln.split()[1:])) for ln in lines[1:] if ln.startswith("R ")]
        ang = [list(map(float, ln.split()[1:])) for ln in lines[1:] if ln.startswith("A ")]
        rad, ang = np.array(rad), np.array(ang)
        return cls(
            n=int(h["n"]),
            center=BallPoint(np.array([float(c) for c in h["center"]])),
            geodesic_radius=float(h["geodesic_radius"]),
            radial_nodes=rad[:, 0],
            radial_weights=rad[:, 1],
            angular_nodes=ang[:, 1:],
            angular_weights=ang[:, 0],
            layout=h.get("layout", {}),
        )


def make_ball_mesh(
    n: int,
    geodesic_radius: float,
    n_radial: int = 16,
    n_theta: int = 8,
    n_phi: Optional[int] = None,
    center=None,
    radial_panels: int = 1,
    seed: int = 0,
) -> BallMesh:
    """Build a :class:`BallMesh` of the geodesic ball ``B(center, geodesic_radius)``."""
    if geodesic_radius <= 0:
        raise DomainError("radius must be positive")
    edges = np.linspace(0.0, geodesic_radius, radial_panels + 1)
    rn, rw = panel_rule(edges, n_radial)
    dirs, aw = sphere_rule(n, n_theta, n_phi, seed)
    c = BallPoint(np.zeros(n) if center is None else np.asarray(center, dtype=float))
    layout = {
        "radial_panels": radial_panels,
        "n_radial_per_panel": n_radial,
        "n_theta": n_theta,
        "n_phi": int(n_phi if n_phi is not None else 2 * n_theta),
        "rule": {2: "circle", 3: "gl-x-uniform", 4: "gegenbauer-x-s2"}.get(n, "sobol-signed"),
        "seed": int(seed),
    }
    return BallMesh(n, c, float(geodesic_radius), rn, rw, dirs, aw, layout)


def ball_integral(mesh: BallMesh, g: Callable) -> float:
    """``sum_i g(x_i) w_i`` with ``g`` taking ball coordinates of shape ``(N, n)``."""
    pts = mesh.points()
    vals = np.asarray(g(pts), dtype=float).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = int(bad[0])
        raise EvaluationError(f"integrand not finite at node {i} (x={pts[i].tolist()})")
    return pairwise_dot(vals, mesh.weights)


def pairwise_dot(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product with a fixed-shape pairwise reduction (order independent of threads)."""
    v = np.asarray(a, dtype=float) * np.asarray(b, dtype=float)
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0]) if v.size else 0.0


# ----------------------------------------------------------------------------
# radial convolution


def graded_rule(lo: float, hi: float, at_lo: bool, beta: float = 0.0, levels: int = 28, m: int = 16, head: float = None, width: float = 0.5):
    """Composite rule on ``[lo, hi]`` graded geometrically toward one end.

    The end panel uses Gauss-Jacobi for the factor ``|x - end|^beta``; the
    returned ``dist`` array holds ``|x - end|`` and ``jac`` flags the nodes
    whose weights already contain ``dist^beta``.
    """
    L = hi - lo
    head = L if head is None else min(head, L)
    fr = 0.25 ** np.arange(levels, 0, -1)
    loc = np.concatenate([[0.0], head * fr, [head]])
    npan = int(math.ceil((L - head) / width)) if L > head else 0
    if npan:
        loc = np.concatenate([loc, np.linspace(head, L, npan + 1)[1:]])
    nodes, wts = panel_rule(loc, m)
    jac = np.zeros(nodes.size, dtype=bool)
    if beta != 0.0:
        xj, wj = gauss_jacobi(m, 0.0, beta)
        h = 0.5 * loc[1]
        nodes[:m] = h * (1.0 + xj)
        wts[:m] = wj * h ** (1.0 + beta)
        jac[:m] = True
    dist = nodes
    x = lo + nodes if at_lo else hi - nodes
    return x, wts, dist, jac


def radial_convolve(
    n: int,
    f: Callable,
    g: Callable,
    rho: float,
    tail: float = 40.0,
    levels: int = 28,
    m: int = 16,
) -> float:
    """Hyperbolic convolution of two radial functions evaluated at distance ``rho``.

    Parameters
    ----------
    f, g : callable
        Vectorised radial profiles (``RadialProfile`` instances qualify).
    tail : float
        Truncation of the outer variable ``p = a + b`` at ``rho + tail``.
    """
    r = float(rho)
    if r < 0:
        raise DomainError("rho must be nonnegative")
    for prof in (f, g):
        cov = getattr(prof, "rho_max", None)
        if cov is not None and cov < r + tail and not getattr(prof, "extrapolates", False):
            raise DomainError("profile does not cover the convolution range")
    if r == 0.0:
        return radial_integral(n, lambda s: f(s) * g(s), tail, singular_exponent=0.5)
    beta = 0.5 * (n - 3) if n % 2 == 0 else 0.0
    P, wp, dp, jp = graded_rule(r, r + tail, True, beta, levels, m, head=min(1.0, tail))
    qa, wa, da, ja = graded_rule(-r, 0.0, True, beta, levels, m)
    qb, wb, db, jb = graded_rule(0.0, r, False, beta, levels, m)
    Q = np.concatenate([qa, qb])
    wq = np.concatenate([wa, wb])
    dq = np.concatenate([da, db])
    jq = np.concatenate([ja, jb])

    Pc, Qc = P[:, None], Q[None, :]
    a = 0.5 * (Pc + Qc)
    b = 0.5 * (Pc - Qc)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        core = f(a) * g(b) * np.sinh(a) * np.sinh(b)
        if n != 3:
            # cosh p - cosh r = 2 sinh((p+r)/2) sinh((p-r)/2); same for r and q
            fp = 2.0 * np.sinh(0.5 * (P + r)) * np.sinh(0.5 * dp)
            fq = 2.0 * np.sinh(0.5 * (r + np.abs(Q))) * np.sinh(0.5 * dq)
            fp = np.where(jp, fp / dp, fp) ** (0.5 * (n - 3))
            fq = np.where(jq, fq / dq, fq) ** (0.5 * (n - 3))
            core = core * fp[:, None] * fq[None, :]
    core = np.where(np.isfinite(core), core, 0.0)
    val = float(wp @ core @ wq)
    return sphere_area(n - 1) / (2.0 * math.sinh(r) ** (n - 2)) * val
