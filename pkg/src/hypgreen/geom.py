"""Hyperbolic geometry in the Poincare ball, half-space and hyperboloid models.

Points are stored as plain ``numpy`` arrays inside thin dataclasses; every
array-level helper (``ball_distance``, ``ball_to_hyperboloid``, ...) accepts
arrays of shape ``(..., n)`` so the same code serves single points and whole
meshes.

Foliation leaves follow the hyperboloid construction: for a unit direction
``v`` and parameter ``t`` the leaf ``U_t`` is the fixed set of the Lorentz
reflection through the spacelike unit normal ``N_t = cosh(t) v + sinh(t) e_0``.
``t`` is the signed geodesic distance from the origin to the leaf, and the
side containing the origin (for ``t > 0``) is ``{X . N_t < 0}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

BOUNDARY_EPS = 1e-14


class GeometryError(ValueError):
    """Invalid point, leaf, or dimension mismatch."""


def _as_array(x) -> np.ndarray:
    if isinstance(x, (BallPoint, HalfSpacePoint)):
        return x.coords
    if isinstance(x, HyperboloidPoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class BallPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size < 2:
            raise GeometryError("dimension must be at least 2")
        if not np.all(np.isfinite(c)):
            raise GeometryError("non-finite coordinates")
        if np.dot(c, c) >= 1.0 - BOUNDARY_EPS:
            raise GeometryError(f"point {c} is not inside the unit ball")
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size

    @property
    def rho(self) -> float:
        """Geodesic distance to the origin."""
        return float(origin_distance(self.coords))


@dataclass(frozen=True)
class HyperboloidPoint:
    x0: float
    xvec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.xvec, dtype=float).reshape(-1)
        x0 = float(self.x0)
        if x0 <= 0:
            raise GeometryError("x0 must be positive")
        if abs(-x0 * x0 + v @ v + 1.0) > 1e-12 * max(1.0, x0 * x0):
            raise GeometryError("point is not on the hyperboloid")
        object.__setattr__(self, "xvec", v)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return self.xvec.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.x0], self.xvec])


@dataclass(frozen=True)
class HalfSpacePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size < 2:
            raise GeometryError("dimension must be at least 2")
        if not c[-1] > 0:
            raise GeometryError("last coordinate must be positive")
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size


@dataclass(frozen=True)
class FoliationLeaf:
    """Leaf ``U_t`` of the foliation orthogonal to ``direction``.

    ``direction`` is either a coordinate index in ``1..n`` or an explicit
    unit vector.
    """

    direction: Union[int, tuple]
    t: float

    def normal_vector(self, n: int) -> np.ndarray:
        if isinstance(self.direction, (int, np.integer)):
            i = int(self.direction)
            if not 1 <= i <= n:
                raise GeometryError(f"direction {i} invalid in dimension {n}")
            v = np.zeros(n)
            v[i - 1] = 1.0
            return v
        v = np.asarray(self.direction, dtype=float)
        if v.shape != (n,):
            raise GeometryError("direction vector has wrong dimension")
        nv = np.linalg.norm(v)
        if nv == 0:
            raise GeometryError("zero direction vector")
        return v / nv


# ----------------------------------------------------------------------------
# model conversions


def ball_to_hyperboloid(x) -> np.ndarray:
    """Map ball coordinates ``(..., n)`` to hyperboloid ``(..., n+1)`` with ``x0`` first."""
    x = _as_array(x)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    den = 1.0 - r2
    return np.concatenate([(1.0 + r2) / den, 2.0 * x / den], axis=-1)


def hyperboloid_to_ball(X) -> np.ndarray:
    X = _as_array(X)
    return X[..., 1:] / (1.0 + X[..., :1])


def ball_to_halfspace(x) -> np.ndarray:
    """Cayley map sending the ball origin to ``e_n`` and ``-e_n`` to infinity."""
    x = _as_array(x)
    xp, xn = x[..., :-1], x[..., -1:]
    den = np.sum(xp * xp, axis=-1, keepdims=True) + (1.0 + xn) ** 2
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([2.0 * xp / den, (1.0 - r2) / den], axis=-1)


def halfspace_to_ball(y) -> np.ndarray:
    y = _as_array(y)
    yp, yn = y[..., :-1], y[..., -1:]
    den = np.sum(yp * yp, axis=-1, keepdims=True) + (1.0 + yn) ** 2
    r2 = np.sum(y * y, axis=-1, keepdims=True)
    return np.concatenate([2.0 * yp / den, (1.0 - r2) / den], axis=-1)


_CONVERTERS = {
    ("ball", "hyperboloid"): lambda p: HyperboloidPoint(*_split(ball_to_hyperboloid(p))),
    ("hyperboloid", "ball"): lambda p: BallPoint(hyperboloid_to_ball(p)),
    ("ball", "halfspace"): lambda p: HalfSpacePoint(ball_to_halfspace(p)),
    ("halfspace", "ball"): lambda p: BallPoint(halfspace_to_ball(p)),
}


def _split(X):
    return X[0], X[1:]


def _model_of(p) -> str:
    if isinstance(p, BallPoint):
        return "ball"
    if isinstance(p, HyperboloidPoint):
        return "hyperboloid"
    if isinstance(p, HalfSpacePoint):
        return "halfspace"
    raise GeometryError(f"not a point type: {type(p).__name__}")


def convert_model(p, target: str):
    """Convert a typed point to ``target`` in {"ball", "hyperboloid", "halfspace"}."""
    src = _model_of(p)
    if target == src:
        return p
    if (src, target) in _CONVERTERS:
        return _CONVERTERS[(src, target)](p)
    # hyperboloid <-> halfspace goes through the ball
    return convert_model(convert_model(p, "ball"), target)


# ----------------------------------------------------------------------------
# distances


def origin_distance(x) -> np.ndarray:
    r = np.linalg.norm(_as_array(x), axis=-1)
    return np.log1p(r) - np.log1p(-r)


def ball_sinh_half_distance(x, y) -> np.ndarray:
    """``sinh(d/2)`` between ball points; equals ``|x-y| / sqrt((1-|x|^2)(1-|y|^2))``."""
    x, y = _as_array(x), _as_array(y)
    diff = np.linalg.norm(x - y, axis=-1)
    px = 1.0 - np.sum(x * x, axis=-1)
    py = 1.0 - np.sum(y * y, axis=-1)
    return diff / np.sqrt(px * py)


def ball_distance(x, y) -> np.ndarray:
    """Geodesic distance in the ball model (broadcasting over leading axes)."""
    return 2.0 * np.arcsinh(ball_sinh_half_distance(x, y))


def halfspace_distance(x, y) -> np.ndarray:
    x, y = _as_array(x), _as_array(y)
    diff = np.linalg.norm(x - y, axis=-1)
    return 2.0 * np.arcsinh(diff / (2.0 * np.sqrt(x[..., -1] * y[..., -1])))


def geodesic_distance(x: BallPoint, y: BallPoint) -> float:
    if not isinstance(x, BallPoint) or not isinstance(y, BallPoint):
        x, y = BallPoint(_as_array(x)), BallPoint(_as_array(y))
    if x.n != y.n:
        raise GeometryError(f"dimension mismatch: {x.n} vs {y.n}")
    return float(ball_distance(x.coords, y.coords))


def lorentz_dot(X, Y) -> np.ndarray:
    X, Y = _as_array(X), _as_array(Y)
    return -X[..., 0] * Y[..., 0] + np.sum(X[..., 1:] * Y[..., 1:], axis=-1)


# ----------------------------------------------------------------------------
# foliations and reflections


def hyperbolic_rotation(X, t: float, v) -> np.ndarray:
    """Apply ``A_t``: the boost mixing ``x0`` with the ``v``-component of ``xvec``."""
    X = _as_array(X)
    v = np.asarray(v, dtype=float)
    x0 = X[..., 0]
    xv = X[..., 1:]
    a = xv @ v
    ch, sh = np.cosh(t), np.sinh(t)
    a_new = ch * a + sh * x0
    x0_new = sh * a + ch * x0
    xv_new = xv + (a_new - a)[..., None] * v
    return np.concatenate([x0_new[..., None], xv_new], axis=-1)


def coordinate_flip(X, v) -> np.ndarray:
    """The reflection ``I`` fixing ``{x . v = 0}`` on the hyperboloid."""
    X = _as_array(X)
    v = np.asarray(v, dtype=float)
    a = X[..., 1:] @ v
    out = X.copy()
    out[..., 1:] -= 2.0 * a[..., None] * v
    return out


def reflect_hyperboloid(X, leaf: FoliationLeaf) -> np.ndarray:
    X = _as_array(X)
    v = leaf.normal_vector(X.shape[-1] - 1)
    return hyperbolic_rotation(coordinate_flip(hyperbolic_rotation(X, -leaf.t, v), v), leaf.t, v)


def reflect_points(x, leaf: FoliationLeaf) -> np.ndarray:
    """``I_t`` on ball coordinates of shape ``(..., n)``."""
    return hyperboloid_to_ball(reflect_hyperboloid(ball_to_hyperboloid(x), leaf))


def reflect_across_leaf(x: BallPoint, leaf: FoliationLeaf) -> BallPoint:
    return BallPoint(reflect_points(x.coords, leaf))


def leaf_side(x, leaf: FoliationLeaf) -> np.ndarray:
    """Signed Lorentz product with the leaf normal: negative on the origin side."""
    x = _as_array(x)
    n = x.shape[-1]
    v = leaf.normal_vector(n)
    X = ball_to_hyperboloid(x)
    return np.cosh(leaf.t) * (X[..., 1:] @ v) - np.sinh(leaf.t) * X[..., 0]


def leaf_through(p, direction) -> float:
    """Parameter ``t`` of the leaf orthogonal to ``direction`` passing through ``p``."""
    p = _as_array(p)
    v = FoliationLeaf(direction, 0.0).normal_vector(p.shape[-1])
    X = ball_to_hyperboloid(p)
    return float(np.arctanh((X[1:] @ v) / X[0]))


def leaves_intersection(ts, directions=None) -> np.ndarray:
    """Ball point lying on the coordinate leaves ``U_{t_i}`` for ``i = 1..n``.

    With orthonormal ``directions`` the leaf conditions are linear in the
    hyperboloid coordinates: ``X . v_i = tanh(t_i) X0``.
    """
    ts = np.asarray(ts, dtype=float)
    n = ts.size
    V = np.eye(n) if directions is None else np.asarray(directions, dtype=float)
    th = np.tanh(ts)
    s = th @ th
    if s >= 1.0:
        raise GeometryError("leaves do not intersect inside H^n")
    x0 = 1.0 / np.sqrt(1.0 - s)
    xv = V.T @ (th * x0)
    return hyperboloid_to_ball(np.concatenate([[x0], xv]))


# ----------------------------------------------------------------------------
# isometries


def mobius_apply(x, y) -> np.ndarray:
    """Array version of ``T_y``: the Mobius isometry with ``T_y(y) = 0``."""
    x, y = _as_array(x), _as_array(y)
    diff = x - y
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    d2 = np.sum(diff * diff, axis=-1, keepdims=True)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    den = 1.0 - 2.0 * xy + x2 * y2
    return ((1.0 - y2) * diff - d2 * y) / den


def mobius_translate(x: BallPoint, y: BallPoint) -> BallPoint:
    if x.n != y.n:
        raise GeometryError(f"dimension mismatch: {x.n} vs {y.n}")
    return BallPoint(mobius_apply(x.coords, y.coords))


def conformal_factor(x) -> np.ndarray:
    """``(1 - |x|^2) / 2``; the metric is ``|dx|^2 / factor^2``."""
    x = _as_array(x)
    return 0.5 * (1.0 - np.sum(x * x, axis=-1))


def volume_density(x) -> np.ndarray:
    """Hyperbolic volume density ``(2 / (1-|x|^2))^n`` relative to Lebesgue measure."""
    x = _as_array(x)
    return conformal_factor(x) ** (-x.shape[-1])


def sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^{n-1}`` in ``R^n``."""
    from scipy.special import gamma

    return 2.0 * np.pi ** (n / 2) / gamma(n / 2)
