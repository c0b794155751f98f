# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernel cores; same interface and results as ``_core_py``."""
import math

import numpy as np

cimport numpy as cnp
from libc.math cimport asinh, exp, expm1, fabs, floor, lgamma, log, log1p, pow, sqrt, INFINITY
from scipy.special.cython_special cimport beta as _beta
from scipy.special.cython_special cimport betainc as _betainc

cnp.import_array()

BACKEND = "compiled"


cdef inline double _ibeta(double x, double a, double b) noexcept nogil:
    return _betainc(a, b, x) * _beta(a, b)


cdef inline double _ibeta_int(double z, int k, double a, double Bka) noexcept nogil:
    """``B_z(k, a)`` for integer ``k >= 1``; ``Bka`` is the complete ``B(k, a)``."""
    cdef double term, acc, q
    cdef int j, m
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return Bka
    if k == 1:
        return -expm1(a * log1p(-z)) / a
    if z < 0.5:
        # z^k (1-z)^a / k * sum_m (k+a)_m / (k+1)_m z^m
        acc = 1.0
        term = 1.0
        for m in range(400):
            term *= (k + a + m) / (k + 1.0 + m) * z
            acc += term
            if fabs(term) < 1e-17 * acc:
                break
        return exp(k * log(z) + a * log1p(-z)) / k * acc
    # I_z = 1 - (1-z)^a sum_{j<k} (a)_j / j! z^j
    acc = 0.0
    term = 1.0
    for j in range(k):
        acc += term
        term *= (a + j) / (j + 1.0) * z
    q = exp(a * log1p(-z))
    return (1.0 - q * acc) * Bka


def incomplete_beta(x, a, b):
    """Unregularised incomplete beta ``B_x(a, b)`` (elementwise in ``x``)."""
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(np.ravel(x), dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xv)
    cdef double da = a, db = b
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        out[i] = _ibeta(xv[i], da, db)
    return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])


def boggio_pairs(X, Y, int n, int k, double R, bint want_grad=False):
    """Hyperbolic Dirichlet kernel of ``P_k`` on ``|x| < R``; see ``_core_py.boggio_pairs``."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=float)
    cdef Py_ssize_t N = Xv.shape[0], M = Yv.shape[0], i, j, c
    cdef double a = 0.5 * n - k
    cdef double C = math.gamma(0.5 * n) / (4.0 ** k * math.pi ** (0.5 * n) * math.gamma(k) ** 2)
    cdef double pref = C * R ** (n - 2 * k) * 4.0 ** (-a)
    cdef double R2 = R * R
    cdef double x2, y2, d2, s, t, z, B, H, px, py, Ht, Hs, dpxc, diff, g
    cdef double B0 = exp(lgamma(k) + lgamma(a) - lgamma(k + a))
    cdef double B1 = exp(lgamma(k) + lgamma(a + 1.0) - lgamma(k + a + 1.0))
    G_arr = np.zeros((N, M))
    cdef double[:, ::1] G = G_arr
    cdef double[:, :, ::1] D
    if want_grad:
        D_arr = np.zeros((N, M, n))
        D = D_arr
    cdef double[::1] yy = np.empty(M)
    for j in range(M):
        y2 = 0.0
        for c in range(n):
            y2 += Yv[j, c] * Yv[j, c]
        yy[j] = y2
    with nogil:
        for i in range(N):
            x2 = 0.0
            for c in range(n):
                x2 += Xv[i, c] * Xv[i, c]
            if x2 >= R2:
                continue
            px = pow(1.0 - x2, a)
            for j in range(M):
                y2 = yy[j]
                if y2 >= R2:
                    continue
                d2 = 0.0
                for c in range(n):
                    diff = Xv[i, c] - Yv[j, c]
                    d2 += diff * diff
                if d2 == 0.0:
                    G[i, j] = INFINITY
                    continue
                s = R2 * d2
                t = (R2 - x2) * (R2 - y2)
                z = t / (t + s)
                B = _ibeta_int(z, k, a, B0)
                H = pow(s, k - 0.5 * n) * B
                py = pow(1.0 - y2, a)
                G[i, j] = pref * px * py * H
                if want_grad:
                    Ht = pow(t, k - 1) * pow(t + s, -0.5 * n)
                    Hs = -0.5 * n * pow(s, k - 0.5 * n - 1.0) * _ibeta_int(z, k, a + 1.0, B1)
                    dpxc = -2.0 * a * pow(1.0 - x2, a - 1.0)
                    for c in range(n):
                        g = dpxc * Xv[i, c] * H + px * (
                            Hs * 2.0 * R2 * (Xv[i, c] - Yv[j, c]) - Ht * 2.0 * Xv[i, c] * (R2 - y2))
                        D[i, j, c] = pref * py * g
    if want_grad:
        return G_arr, D_arr
    return G_arr


cdef inline double _hermite(double d, double u0, double h, double[::1] logv, double[::1] slope,
                            double tail_slope) noexcept nogil:
    cdef Py_ssize_t Nt = logv.shape[0], i
    cdef double u, r, tau, t2, t3, val, u_end
    if d <= 0.0:
        return 0.0
    u = log(d)
    r = (u - u0) / h
    if r < 0:
        return exp(logv[0] + slope[0] * (u - u0))
    if r > Nt - 1:
        u_end = u0 + (Nt - 1) * h
        return exp(logv[Nt - 1] + tail_slope * (d - exp(u_end)))
    i = <Py_ssize_t>floor(r)
    if i > Nt - 2:
        i = Nt - 2
    tau = r - i
    t2 = tau * tau
    t3 = t2 * tau
    val = ((2 * t3 - 3 * t2 + 1) * logv[i] + (t3 - 2 * t2 + tau) * slope[i] * h
           + (-2 * t3 + 3 * t2) * logv[i + 1] + (t3 - t2) * slope[i + 1] * h)
    return exp(val)


def hermite_log_table(d, double u0, double h, logv, slope, double tail_slope):
    """Cubic Hermite interpolation of a log-tabulated radial kernel; see ``_core_py``."""
    cdef cnp.ndarray[double, ndim=1] dv = np.ascontiguousarray(np.ravel(d), dtype=float)
    cdef double[::1] lv = np.ascontiguousarray(logv, dtype=float)
    cdef double[::1] sl = np.ascontiguousarray(slope, dtype=float)
    out = np.empty(dv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(dv.shape[0]):
        o[i] = _hermite(dv[i], u0, h, lv, sl, tail_slope)
    return out.reshape(np.shape(d))


def radial_table_pairs(X, Y, double u0, double h, logv, slope, double tail_slope):
    """Tabulated radial kernel at all pairwise geodesic distances; see ``_core_py``."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=float)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=float)
    cdef double[::1] lv = np.ascontiguousarray(logv, dtype=float)
    cdef double[::1] sl = np.ascontiguousarray(slope, dtype=float)
    cdef Py_ssize_t N = Xv.shape[0], M = Yv.shape[0], n = Xv.shape[1], i, j, c
    cdef double x2, y2, d2, diff, dist
    out = np.empty((N, M))
    cdef double[:, ::1] o = out
    cdef double[::1] yy = np.empty(M)
    for j in range(M):
        y2 = 0.0
        for c in range(n):
            y2 += Yv[j, c] * Yv[j, c]
        yy[j] = 1.0 - y2
    with nogil:
        for i in range(N):
            x2 = 0.0
            for c in range(n):
                x2 += Xv[i, c] * Xv[i, c]
            x2 = 1.0 - x2
            for j in range(M):
                d2 = 0.0
                for c in range(n):
                    diff = Xv[i, c] - Yv[j, c]
                    d2 += diff * diff
                dist = 2.0 * asinh(sqrt(d2) / sqrt(x2 * yy[j]))
                o[i, j] = _hermite(dist, u0, h, lv, sl, tail_slope)
    return out
