"""Numpy implementation of the pairwise kernel cores.

Mirrors the compiled ``_core`` extension; both are selected through
``hypgreen._backend``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

BACKEND = "python"


def incomplete_beta(x, a, b):
    """Unregularised incomplete beta ``B_x(a, b)``."""
    return special.betainc(a, b, x) * special.beta(a, b)


def boggio_pairs(X, Y, n, k, R, want_grad=False):
    """Hyperbolic Dirichlet kernel of ``P_k`` on the Euclidean ball ``|x| < R``.

    Parameters
    ----------
    X, Y : ndarray, shape (N, n), (M, n)
        Ball coordinates.
    want_grad : bool
        Also return ``d G / d x`` of shape ``(N, M, n)``.

    Returns
    -------
    G : ndarray (N, M)
        Zero when either point lies outside ``B_R``; ``inf`` on coincident points.
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    a = 0.5 * n - k
    C = math.gamma(0.5 * n) / (4.0 ** k * math.pi ** (0.5 * n) * math.gamma(k) ** 2)
    R2 = R * R
    x2 = np.sum(X * X, axis=1)[:, None]
    y2 = np.sum(Y * Y, axis=1)[None, :]
    diff = X[:, None, :] - Y[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    inside = (x2 < R2) & (y2 < R2)
    s = R2 * d2
    t = np.where(inside, (R2 - x2) * (R2 - y2), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = t / (t + s)
        B = incomplete_beta(z, k, a)
        H = s ** (k - 0.5 * n) * B
        pref = C * R ** (n - 2 * k) * 4.0 ** (-a)
        px = (1.0 - x2) ** a
        py = (1.0 - y2) ** a
        G = pref * px * py * H
    G = np.where(inside, G, 0.0)
    G = np.where(inside & (d2 == 0.0), np.inf, G)
    if not want_grad:
        return G
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Ht = t ** (k - 1) * (t + s) ** (-0.5 * n)
        Hs = -0.5 * n * s ** (k - 0.5 * n - 1.0) * incomplete_beta(z, k, a + 1.0)
        gs = 2.0 * R2 * diff
        gt = -2.0 * X[:, None, :] * (R2 - y2)[:, :, None]
        dpx = -2.0 * a * X[:, None, :] * ((1.0 - x2) ** (a - 1.0))[:, :, None]
        grad = pref * py[:, :, None] * (
            dpx * H[:, :, None] + px[:, :, None] * (Hs[:, :, None] * gs + Ht[:, :, None] * gt)
        )
    grad = np.where(inside[:, :, None] & (d2[:, :, None] > 0), grad, 0.0)
    return G, grad


def radial_table_pairs(X, Y, u0, h, logv, slope, tail_slope):
    """Evaluate a tabulated radial kernel at all pairwise geodesic distances.

    The table stores ``log K`` and its PCHIP slope at ``log rho = u0 + i h``.
    Below the table the power law of the first node is continued; above it
    ``log K`` continues linearly in ``rho`` with slope ``tail_slope``.
    Coincident points return 0 (the diagonal is handled by the caller).
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    x2 = np.sum(X * X, axis=1)[:, None]
    y2 = np.sum(Y * Y, axis=1)[None, :]
    diff = X[:, None, :] - Y[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    d = 2.0 * np.arcsinh(dist / np.sqrt((1.0 - x2) * (1.0 - y2)))
    return hermite_log_table(d, u0, h, logv, slope, tail_slope)


def hermite_log_table(d, u0, h, logv, slope, tail_slope):
    d = np.asarray(d, dtype=float)
    N = logv.size
    out = np.zeros_like(d)
    pos = d > 0
    u = np.log(np.where(pos, d, 1.0))
    r = (u - u0) / h
    i = np.clip(np.floor(r).astype(np.int64), 0, N - 2)
    tau = r - i
    y0, y1 = logv[i], logv[i + 1]
    m0, m1 = slope[i] * h, slope[i + 1] * h
    t2, t3 = tau * tau, tau * tau * tau
    val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + tau) * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1
    lo = r < 0
    val = np.where(lo, logv[0] + slope[0] * (u - u0), val)
    u_end = u0 + (N - 1) * h
    hi = r > N - 1
    d_end = math.exp(u_end)
    val = np.where(hi, logv[-1] + tail_slope * (d - d_end), val)
    out[pos] = np.exp(val[pos])
    return out
