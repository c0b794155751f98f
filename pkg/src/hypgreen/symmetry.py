"""Moving-plane measurement harness for discrete fields on the ball.

For a leaf ``U_t`` with unit normal ``v``, the swept half-space ``Sigma_t`` is
the side where the Lorentz product ``cosh(t) X.v - sinh(t) X0`` is negative
(it contains the origin when ``t > 0``). The reflection deficit

    D(t) = max_{x in Sigma_t} (u(I_t x) - u(x))_+

vanishes for every ``t >= t_c`` when ``u`` is symmetric about a point on
``U_{t_c}`` and decreasing away from it. Sweeping both orientations ``+v``
and ``-v`` locates the critical leaves; their intersection over the
coordinate directions estimates the symmetry center.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .fields import Field, MeshField, as_field
from .geom import (
    FoliationLeaf,
    GeometryError,
    ball_distance,
    ball_to_hyperboloid,
    hyperboloid_to_ball,
    leaf_side,
    leaf_through,
    reflect_points,
)
from .quad import BallMesh


def _normal(direction, n: int) -> np.ndarray:
    return FoliationLeaf(direction, 0.0).normal_vector(n)


def sample_points(mesh: BallMesh, midpoints: bool = True) -> np.ndarray:
    """Mesh nodes plus radial and angular midpoints (Euclidean midpoints in the ball)."""
    P = mesh.points()
    if not midpoints:
        return P
    nr, M = mesh.n_radial, mesh.n_angular
    Pr = P.reshape(nr, M, -1)
    out = [P]
    if nr > 1:
        out.append((0.5 * (Pr[1:] + Pr[:-1])).reshape(-1, mesh.n))
    if M > 1:
        D = mesh.angular_nodes
        cosang = D @ D.T
        np.fill_diagonal(cosang, -2.0)
        nb = np.argmax(cosang, axis=1)
        out.append((0.5 * (Pr + Pr[:, nb, :])).reshape(-1, mesh.n))
    return np.concatenate(out, axis=0)


def reflection_deficit(u, leaf: FoliationLeaf, samples, mesh: BallMesh = None, weights=None) -> float:
    """``max (u(I_t x) - u(x))_+`` over the samples lying in ``Sigma_t``.

    Parameters
    ----------
    u : Field, callable or ndarray
        Nodal arrays need ``mesh``; points outside the support read as 0.
    leaf : FoliationLeaf
    samples : ndarray, shape (N, n)
    weights : ndarray, optional
        Quadrature weights of the samples; when given the function returns
        ``(sup, l2)`` where ``l2`` is the weighted L^2 norm of the positive part.
    """
    f = as_field(u, mesh)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    side = leaf_side(X, leaf) < 0.0
    if not np.any(side):
        return (0.0, 0.0) if weights is not None else 0.0
    Xs = X[side]
    d = f(reflect_points(Xs, leaf)) - f(Xs)
    pos = np.maximum(d, 0.0)
    sup = float(np.max(pos))
    if weights is None:
        return sup
    w = np.asarray(weights, dtype=float)[side]
    return sup, float(math.sqrt(np.dot(w, pos * pos)))


def default_t_grid(mesh: BallMesh, count: int = 61) -> np.ndarray:
    """Symmetric leaf grid over the leaves meeting the mesh ball (contains 0 for odd counts)."""
    c = mesh.center.coords
    T = mesh.geodesic_radius
    off = float(np.max(np.abs([leaf_through(c, i + 1) for i in range(mesh.n)]))) if np.any(c) else 0.0
    lim = 0.95 * T + off
    if count < 2:
        return np.zeros(1)
    # symmetric integer offsets keep t = 0 exact and the grid exactly antisymmetric
    k = np.arange(count) - 0.5 * (count - 1)
    return lim * k / (0.5 * (count - 1))


def center_from_leaves(ts, normals) -> np.ndarray:
    """Ball point whose leaves orthogonal to ``normals`` have parameters ``ts`` (least squares)."""
    V = np.atleast_2d(np.asarray(normals, dtype=float))
    th = np.tanh(np.asarray(ts, dtype=float))
    w, *_ = np.linalg.lstsq(V, th, rcond=None)
    s = float(w @ w)
    if s >= 1.0:
        raise GeometryError("leaves do not meet inside H^n")
    x0 = 1.0 / math.sqrt(1.0 - s)
    return hyperboloid_to_ball(np.concatenate([[x0], x0 * w]))


@dataclass
class SymmetryReport:
    """Deficit curves, critical leaves and the certification verdict.

    ``curves`` holds one record per (direction, orientation) with arrays
    ``t`` and ``deficit``. ``critical`` holds per direction the critical
    parameters ``lambda_plus`` (orientation ``+v``) and ``lambda_minus``
    (orientation ``-v``), the central leaf ``t_center`` and the residual
    deficits there.
    """

    directions: list
    curves: list
    critical: list
    center: Optional[np.ndarray]
    certified: bool
    tolerance: float
    max_monotonicity_violation: float = float("nan")
    directional_derivative_flags: list = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    final_deficit: float = float("nan")

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (float, np.floating)):
                v = float(v)
                return v if math.isfinite(v) else None
            if isinstance(v, np.integer):
                return int(v)
            if isinstance(v, np.bool_):
                return bool(v)
            return v

        return clean({
            "directions": [_dir_label(d) for d in self.directions],
            "curves": self.curves,
            "critical": self.critical,
            "center": None if self.center is None else self.center,
            "certified": self.certified,
            "tolerance": self.tolerance,
            "final_deficit": self.final_deficit,
            "max_monotonicity_violation": self.max_monotonicity_violation,
            "directional_derivative_flags": self.directional_derivative_flags,
            "diagnostics": self.diagnostics,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        rows = ["direction,t,deficit"]
        for c in self.curves:
            for t, d in zip(c["t"], c["deficit"]):
                rows.append(f"{c['label']},{float(t)!r},{float(d)!r}")
        return "\n".join(rows) + "\n"


def _dir_label(d) -> str:
    if isinstance(d, (int, np.integer)):
        return str(int(d))
    return "(" + " ".join(repr(float(x)) for x in d) + ")"


def _critical(ts: np.ndarray, D: np.ndarray, tol: float) -> float:
    """Smallest grid ``t`` with ``D(s) <= tol`` for every grid ``s >= t``."""
    bad = np.flatnonzero(D > tol)
    if bad.size == 0:
        return float(ts[0])
    if bad[-1] == ts.size - 1:
        return float("inf")
    return float(ts[bad[-1] + 1])


def _refine(run, i, s, ts, D, tol, steps):
    """Grid critical leaf, then bisection toward the first sub-grid ``t`` with ``D <= tol``."""
    lam = _critical(ts, D, tol)
    k = int(np.searchsorted(ts, lam))
    if not math.isfinite(lam) or k == 0 or steps <= 0:
        return lam
    lo, hi = float(ts[k - 1]), lam
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if run((i, s, mid)) > tol:
            lo = mid
        else:
            hi = mid
    return hi


def moving_plane_sweep(u, directions: Sequence = None, t_grid=None, mesh: BallMesh = None, samples=None,
                       tol: Optional[float] = None, threads: int = 1, refine: int = 16) -> SymmetryReport:
    """Sweep leaves in each direction (both orientations) and estimate the symmetry center.

    Parameters
    ----------
    u : MeshField, Field or ndarray
        Nodal arrays need ``mesh``.
    directions : sequence of int or vectors
        At least ``n`` spanning directions; defaults to the coordinate axes.
    t_grid : ndarray, optional
        Increasing leaf parameters; defaults to :func:`default_t_grid`.
        The critical leaf on the grid is refined by ``refine`` bisection
        steps toward the previous grid point.
    tol : float, optional
        Deficit tolerance; defaults to ``1e-6 |u|_inf``.
    """
    f = as_field(u, mesh)
    mesh = mesh if mesh is not None else getattr(f, "mesh", None)
    if mesh is None and samples is None:
        raise ValueError("need a mesh or explicit samples")
    n = f.n if f.n is not None else mesh.n
    directions = list(range(1, n + 1)) if directions is None else list(directions)
    normals = np.array([_normal(d, n) for d in directions])
    if np.linalg.matrix_rank(normals) < n:
        raise ValueError(f"directions must span R^{n}")
    X = sample_points(mesh) if samples is None else np.atleast_2d(np.asarray(samples, dtype=float))
    ts = np.sort(np.asarray(default_t_grid(mesh) if t_grid is None else t_grid, dtype=float))
    scale = f.sup_norm() if isinstance(f, MeshField) else float(np.max(np.abs(f(X))))
    tol = 1e-6 * scale if tol is None else float(tol)
    step = float(np.max(np.diff(ts))) if ts.size > 1 else 0.0

    jobs = [(i, s, t) for i in range(len(directions)) for s in (1.0, -1.0) for t in ts]

    def run(job):
        i, s, t = job
        return reflection_deficit(f, FoliationLeaf(tuple(s * normals[i]), float(t)), X)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(run, jobs))
    else:
        vals = [run(j) for j in jobs]
    vals = np.array(vals).reshape(len(directions), 2, ts.size)

    curves, critical, diags = [], [], []
    consistent = True
    t_center = []
    for i, d in enumerate(directions):
        lab = _dir_label(d)
        curves.append({"label": "+" + lab if not lab.startswith("(") else lab, "t": ts, "deficit": vals[i, 0]})
        curves.append({"label": "-" + lab if not lab.startswith("(") else "-" + lab, "t": ts, "deficit": vals[i, 1]})
        lp = _refine(run, i, 1.0, ts, vals[i, 0], tol, refine)
        lm = _refine(run, i, -1.0, ts, vals[i, 1], tol, refine)
        # symmetry needs the two critical leaves to coincide: lp = -lm
        gap = lp + lm
        ok = math.isfinite(gap) and gap <= step * (1.0 + 1e-9)
        if not ok:
            consistent = False
            diags.append(f"direction {lab}: critical leaves {lp:.6g} and {-lm:.6g} do not meet")
        tc = 0.5 * (lp - lm) if math.isfinite(gap) else float("nan")
        t_center.append(tc)
        critical.append({"direction": lab, "lambda_plus": lp, "lambda_minus": lm, "t_center": tc, "consistent": ok})

    center = None
    if all(math.isfinite(t) for t in t_center):
        try:
            center = center_from_leaves(t_center, normals)
        except GeometryError as exc:
            consistent = False
            diags.append(f"center estimation failed: {exc}")
    final = float("nan")
    if center is not None:
        if mesh is not None and ball_distance(center[None, :], mesh.center.coords)[0] >= mesh.geodesic_radius:
            consistent = False
            diags.append("estimated center lies outside the domain")
        finals = []
        for i, rec in enumerate(critical):
            v = normals[i]
            tl = float(np.arctanh(np.clip((ball_to_hyperboloid(center)[1:] @ v) / ball_to_hyperboloid(center)[0], -1, 1)))
            dp = reflection_deficit(f, FoliationLeaf(tuple(v), tl), X)
            dm = reflection_deficit(f, FoliationLeaf(tuple(-v), -tl), X)
            rec.update({"t_center": tl, "deficit_plus": dp, "deficit_minus": dm})
            finals += [dp, dm]
        final = float(max(finals))
        if final > tol:
            diags.append(f"deficit {final:.3g} at the central leaves exceeds tolerance {tol:.3g}")
    certified = bool(consistent and center is not None and final <= tol)
    return SymmetryReport(directions, curves, critical, center, certified, tol, diagnostics=diags, final_deficit=final)


# ----------------------------------------------------------------------------
# radial monotonicity


@dataclass
class RadialCheck:
    monotone: bool
    max_violation: float
    derivative_flags: list
    inconclusive: bool
    bin_centers: np.ndarray
    bin_means: np.ndarray

    def to_dict(self) -> dict:
        return {
            "monotone": bool(self.monotone),
            "max_violation": float(self.max_violation),
            "derivative_flags": self.derivative_flags,
            "inconclusive": bool(self.inconclusive),
            "bins": [[float(a), float(b)] for a, b in zip(self.bin_centers, self.bin_means)],
        }


def _bins(dist: np.ndarray, n_bins: int):
    """Group distances into shells (exact ties first, else equal-width bins)."""
    key = np.round(dist, 10)
    uniq = np.unique(key)
    if uniq.size <= max(n_bins, 1) * 2 and uniq.size < dist.size:
        return np.searchsorted(uniq, key), uniq.size
    edges = np.linspace(0.0, float(dist.max()) * (1 + 1e-12), n_bins + 1)
    return np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, n_bins - 1), n_bins


def hyperplane_samples(R: float, lam: float, n: int, rings=(0.0, 0.3, 0.6, 0.9), per_ring: int = 8) -> np.ndarray:
    """Points of the Euclidean hyperplane ``x_1 = lam`` inside ``|x| < R``."""
    a = math.sqrt(max(R * R - lam * lam, 0.0))
    pts = []
    for s in rings:
        if s == 0.0:
            p = np.zeros(n)
            p[0] = lam
            pts.append(p)
            continue
        for j in range(per_ring):
            ang = 2.0 * math.pi * j / per_ring
            p = np.zeros(n)
            p[0] = lam
            if n >= 3:
                p[1], p[2] = s * a * math.cos(ang), s * a * math.sin(ang)
            else:
                p[1] = s * a * (1.0 if j % 2 == 0 else -1.0)
            pts.append(p)
    return np.array(pts)


def x1_derivative(f: Field, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central difference of ``f`` in ``x_1``."""
    e = np.zeros(X.shape[1])
    e[0] = h
    return (f(X + e) - f(X - e)) / (2.0 * h)


def radial_profile_check(u, center=None, mesh: BallMesh = None, n_bins: int = None,
                         derivative_lambdas: Sequence[float] = None, R: float = None) -> RadialCheck:
    """Bin nodes by geodesic distance to ``center`` and test strict decrease of the bin means.

    The violation is ``max_c (mean_c - min_{b < c} mean_b)_+``: the largest
    rise of a bin mean above any bin closer to the center. When
    ``derivative_lambdas`` is given, ``du/dx_1`` is additionally sampled on
    the Euclidean hyperplanes ``x_1 = lam`` inside ``|x| < R`` and flagged
    negative or not.
    """
    f = as_field(u, mesh)
    mesh = mesh if mesh is not None else getattr(f, "mesh", None)
    if mesh is None:
        raise ValueError("radial_profile_check needs the mesh")
    c = mesh.center.coords if center is None else np.asarray(center, dtype=float)
    P = mesh.points()
    vals = f.node_values() if isinstance(f, MeshField) and f.mesh is mesh else f(P)
    dist = ball_distance(P, c)
    idx, nb = _bins(dist, n_bins or max(3, mesh.n_radial))
    counts = np.bincount(idx, minlength=nb)
    use = counts > 0
    sums = np.bincount(idx, weights=vals, minlength=nb)
    dsum = np.bincount(idx, weights=dist, minlength=nb)
    means = sums[use] / counts[use]
    centers = dsum[use] / counts[use]
    inconclusive = means.size < 3
    if means.size >= 2:
        run_min = np.minimum.accumulate(means)
        viol = float(max(0.0, np.max(means[1:] - run_min[:-1])))
        monotone = bool(np.all(np.diff(means) < 0.0))
    else:
        viol, monotone = 0.0, False
    flags = []
    if derivative_lambdas is not None:
        Rr = mesh.euclidean_radius() if R is None else R
        for lam in derivative_lambdas:
            X = hyperplane_samples(Rr, float(lam), mesh.n)
            der = x1_derivative(f, X)
            flags.append({"lambda": float(lam), "points": int(X.shape[0]), "max_derivative": float(np.max(der)),
                          "negative": bool(np.all(der < 0.0))})
    return RadialCheck(monotone and not inconclusive, viol, flags, inconclusive, centers, means)
