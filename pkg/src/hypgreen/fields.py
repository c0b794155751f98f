"""Scalar fields on the ball: analytic callables and mesh-sampled data.

A :class:`MeshField` interpolates nodal values of a :class:`~hypgreen.quad.BallMesh`
in geodesic polar coordinates about the mesh center: PCHIP along each radial
ray (monotone, exact for radial data) and linear weights between rays. Points
beyond the mesh radius take the zero extension.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .geom import mobius_apply, origin_distance
from .quad import BallMesh


class Field:
    """Interface: ``field(X)`` evaluates at ball points of shape ``(N, n)``."""

    n: int

    def __call__(self, X) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def sup_norm(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class AnalyticField(Field):
    func: Callable
    n: int
    sample_points: np.ndarray = None

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.func(X), dtype=float).reshape(-1)

    def sup_norm(self) -> float:
        if self.sample_points is None:
            return 1.0
        return float(np.max(np.abs(self(self.sample_points))))


class MeshField(Field):
    """Interpolated nodal data on a polar ball mesh.

    Parameters
    ----------
    mesh : BallMesh
    values : ndarray
        One value per node, radial-major.
    boundary_value : float or None
        Value imposed at the mesh radius (0 for Dirichlet data and for the
        zero extension of truncated whole-space solutions). ``None`` keeps the
        PCHIP end behaviour up to the radius.
    """

    def __init__(self, mesh: BallMesh, values, boundary_value=0.0):
        self.mesh = mesh
        self.n = mesh.n
        self.values = np.asarray(values, dtype=float).reshape(mesh.n_radial, mesh.n_angular)
        self.boundary_value = boundary_value
        wa = mesh.angular_weights / mesh.angular_weights.sum()
        means = self.values @ wa
        r = mesh.radial_nodes
        # even extension to the center: a + b rho^2 through the first two shells
        if r.size >= 2:
            b = (means[1] - means[0]) / (r[1] ** 2 - r[0] ** 2)
            c0 = means[0] - b * r[0] ** 2
        else:
            c0 = means[0]
        knots = [np.zeros(1), r]
        vals = [np.full((1, mesh.n_angular), c0), self.values]
        if boundary_value is not None:
            knots.append(np.array([mesh.geodesic_radius]))
            vals.append(np.full((1, mesh.n_angular), float(boundary_value)))
        self._knots = np.concatenate(knots)
        self._ray = PchipInterpolator(self._knots, np.concatenate(vals, axis=0), axis=0, extrapolate=True)
        self._setup_angles()

    # -- angular structure ---------------------------------------------------

    def _setup_angles(self):
        lay = self.mesh.layout or {}
        self._structured = self.n == 3 and lay.get("rule") == "gl-x-uniform"
        if self._structured:
            nt, nphi = lay["n_theta"], lay["n_phi"]
            self._nt, self._nphi = nt, nphi
            d = self.mesh.angular_nodes.reshape(nt, nphi, 3)
            self._theta = np.arccos(np.clip(d[:, 0, 2], -1.0, 1.0))

    def _angular_weights(self, dirs):
        """Sparse interpolation weights: list of (ray indices, weights) arrays of shape (P, K)."""
        if self._structured:
            return self._weights_structured(dirs)
        D = self.mesh.angular_nodes
        cosang = np.clip(dirs @ D.T, -1.0, 1.0)
        K = min(self.n + 1, D.shape[0])
        idx = np.argpartition(-cosang, K - 1, axis=1)[:, :K]
        ang = np.arccos(np.take_along_axis(cosang, idx, axis=1))
        w = 1.0 / (ang * ang + 1e-30)
        exact = ang < 1e-12
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), w)
        w /= w.sum(axis=1, keepdims=True)
        return idx, w

    def _weights_structured(self, dirs):
        theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
        nt, nphi = self._nt, self._nphi
        # theta nodes ascend from near 0 to near pi (GL in cos descending)
        th = self._theta
        order = np.argsort(th)
        ths = th[order]
        # pseudo-rings at the poles carry the ring mean (index -1 => pole)
        ext = np.concatenate([[0.0], ths, [np.pi]])
        pos = np.clip(np.searchsorted(ext, theta, side="right") - 1, 0, ext.size - 2)
        t = (theta - ext[pos]) / (ext[pos + 1] - ext[pos])
        dphi = 2.0 * np.pi / nphi
        fj = phi / dphi
        j0 = np.floor(fj).astype(int) % nphi
        j1 = (j0 + 1) % nphi
        s = fj - np.floor(fj)
        idx = np.zeros((dirs.shape[0], 4), dtype=int)
        w = np.zeros((dirs.shape[0], 4))
        pole_n, pole_s = -1, -2
        for col, (ring_pos, rw) in enumerate(((pos, 1.0 - t), (pos + 1, t))):
            is_north = ring_pos == 0
            is_south = ring_pos == ext.size - 1
            ring = order[np.clip(ring_pos - 1, 0, nt - 1)]
            a = ring * nphi + j0
            b = ring * nphi + j1
            a = np.where(is_north, pole_n, np.where(is_south, pole_s, a))
            b = np.where(is_north, pole_n, np.where(is_south, pole_s, b))
            idx[:, 2 * col] = a
            idx[:, 2 * col + 1] = b
            w[:, 2 * col] = rw * (1.0 - s)
            w[:, 2 * col + 1] = rw * s
        return idx, w

    # -- evaluation ----------------------------------------------------------

    def local_polar(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = self.mesh.center.coords
        L = mobius_apply(X, c) if np.any(c) else X
        nrm = np.linalg.norm(L, axis=1)
        rho = origin_distance(L)
        dirs = np.where(nrm[:, None] > 0, L / np.where(nrm > 0, nrm, 1.0)[:, None], 0.0)
        dirs[nrm == 0, 0] = 1.0
        return rho, dirs

    def __call__(self, X):
        rho, dirs = self.local_polar(X)
        out = np.zeros(rho.size)
        inside = rho < self.mesh.geodesic_radius
        if not np.any(inside):
            return out
        ri, di = rho[inside], dirs[inside]
        ray_vals = self._ray(ri)  # (P, M)
        idx, w = self._angular_weights(di)
        if self._structured:
            nt, nphi = self._nt, self._nphi
            rings = ray_vals.reshape(-1, nt, nphi)
            order = np.argsort(self._theta)
            north = rings[:, order[0], :].mean(axis=1)
            south = rings[:, order[-1], :].mean(axis=1)
            ext = np.concatenate([ray_vals, south[:, None], north[:, None]], axis=1)
            # -1 -> north (last column), -2 -> south
            col = np.where(idx >= 0, idx, ray_vals.shape[1] + 2 + idx)
            vals = np.take_along_axis(ext, col, axis=1)
        else:
            vals = np.take_along_axis(ray_vals, idx, axis=1)
        out[inside] = np.sum(vals * w, axis=1)
        return out

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def node_values(self) -> np.ndarray:
        return self.values.ravel()


def as_field(u, mesh: BallMesh = None, boundary_value=0.0) -> Field:
    """Wrap arrays (with a mesh), callables, or fields uniformly."""
    if isinstance(u, Field):
        return u
    if callable(u):
        n = mesh.n if mesh is not None else None
        return AnalyticField(u, n, mesh.points() if mesh is not None else None)
    if mesh is None:
        raise ValueError("nodal values need a mesh")
    return MeshField(mesh, u, boundary_value)
