"""Heat kernel of ``H^n``.

Odd dimension ``n = 2m + 1``::

    p_t(rho) = 2^{-m-1} pi^{-m-1/2} t^{-1/2} e^{-(n-1)^2 t/4} D^m e^{-rho^2/(4t)},
    D = -(1/sinh rho) d/drho.

``D^m`` acts on finite sums of monomials ``c rho^a coth^b sinh^{-e} t^{-d} E``
(``E = e^{-rho^2/4t}``), so the kernel is an exact term list. Near ``rho = 0``
the list suffers cancellation and a Taylor series in ``w = cosh rho - 1`` is
used instead (there ``D = -d/dw``).

Even dimension ``n = 2m`` reduces to the odd kernel one dimension up::

    q^{(2m)}(rho) = 2 sqrt(2) int_0^inf q^{(2m+1)}(r(s)) ds,
    cosh r = cosh rho + s^2,

where ``q`` is the kernel without the spectral factor ``e^{-(n-1)^2 t/4}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .specfun import DomainError

_TAYLOR_W = 0.5
_TAYLOR_GAUSS = 3.0
_TAYLOR_TERMS = 60
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class HeatQuery:
    n: int
    t: float
    rho: float
    shifted: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if not self.t > 0:
            raise DomainError(f"t={self.t} must be positive")
        if not self.rho >= 0:
            raise DomainError(f"rho={self.rho} must be nonnegative")


@lru_cache(maxsize=None)
def odd_terms(m: int) -> tuple:
    """Term list of ``D^m E`` as tuples ``(c, a, b, e, d)``."""
    terms = {(0, 0, 0, 0): 1.0}
    for _ in range(m):
        new: dict = {}

        def add(key, val):
            new[key] = new.get(key, 0.0) + val

        for (a, b, e, d), c in terms.items():
            if a:
                add((a - 1, b, e + 1, d), -a * c)
            if b:
                add((a, b - 1, e + 3, d), b * c)
            if e:
                add((a, b + 1, e + 1, d), e * c)
            add((a + 1, b, e + 1, d + 1), 0.5 * c)
        terms = {k: v for k, v in new.items() if v != 0.0}
    return tuple((c, a, b, e, d) for (a, b, e, d), c in sorted(terms.items()))


def _log_sinh(r):
    return r + np.log1p(-np.exp(-2.0 * r)) - math.log(2.0)


def _eval_terms(m, t, rho):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    ls = _log_sinh(rho)
    lr = np.log(rho)
    coth = 1.0 / np.tanh(rho)
    g = -rho * rho / (4.0 * t)
    for c, a, b, e, d in odd_terms(m):
        out += c * np.exp(a * lr - e * ls - d * math.log(t) + g) * coth ** b
    return out


@lru_cache(maxsize=None)
def _rho2_series(terms: int) -> np.ndarray:
    """Coefficients of ``arccosh(1+w)^2`` in powers of ``w``."""
    k = np.arange(1, terms + 1)
    coef = np.zeros(terms + 1)
    coef[1:] = 2.0 * (-1.0) ** (k + 1) * 2.0 ** k / (k * k * comb(2 * k, k))
    return coef


def _eval_taylor(m, t, rho):
    """``D^m E`` from the Taylor series of ``E`` in ``w = cosh rho - 1``.

    The series runs in ``W = w / t`` (coefficients ``g_k t^k``), which keeps
    every term of order one for small ``t``.
    """
    rho = np.asarray(rho, dtype=float)
    N = _TAYLOR_TERMS + m
    k_all = np.arange(N + 1)
    h = -_rho2_series(N) * t ** (k_all - 1.0) / 4.0
    g = np.zeros(N + 1)
    g[0] = 1.0
    for k in range(1, N + 1):
        j = np.arange(1, k + 1)
        g[k] = np.dot(j * h[j], g[k - j]) / k
    # m-th derivative in w
    k = np.arange(m, N + 1)
    fall = np.ones_like(k, dtype=float)
    for i in range(m):
        fall *= k - i
    dcoef = g[m:] * fall
    W = 2.0 * np.sinh(0.5 * rho) ** 2 / t
    val = np.polynomial.polynomial.polyval(W, dcoef) / t ** m
    return (-1.0) ** m * val


def _odd_shifted(n, t, rho):
    m = (n - 1) // 2
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    pref = 2.0 ** (-m - 1) * math.pi ** (-m - 0.5) / math.sqrt(t)
    if m == 0:
        return pref * np.exp(-rho * rho / (4.0 * t))
    out = np.empty_like(rho)
    w = 2.0 * np.sinh(0.5 * rho) ** 2
    small = (w <= _TAYLOR_W) & (rho * rho <= 4.0 * _TAYLOR_GAUSS * t)
    if np.any(small):
        out[small] = _eval_taylor(m, t, rho[small])
    big = ~small
    if np.any(big):
        out[big] = _eval_terms(m, t, rho[big])
    return pref * out


def _even_shifted(n, t, rho, chunk=256):
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    st = math.sqrt(t)
    span = 40.0 * st
    npan = max(int(math.ceil(span / (0.25 * min(st, 1.0)))), 8)
    frac = np.linspace(0.0, 1.0, npan + 1)
    out = np.empty_like(rho)
    for c0 in range(0, rho.size, chunk):
        r0 = rho[c0 : c0 + chunk, None]
        r_max = np.minimum(r0 + span, 700.0)
        r_edges = r0 + (r_max - r0) * frac[None, :]
        sh2 = np.sinh(0.5 * r0) ** 2
        # sinh^2 form keeps digits near r0
        s_edges = np.sqrt(np.maximum(2.0 * (np.sinh(0.5 * r_edges) ** 2 - sh2), 0.0))
        lo, hi = s_edges[:, :-1, None], s_edges[:, 1:, None]
        s = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        wts = 0.5 * (hi - lo) * _GL_WEIGHTS
        r = 2.0 * np.arcsinh(np.sqrt(sh2[:, :, None] + 0.5 * s * s))
        vals = _odd_shifted(n + 1, t, r.ravel()).reshape(r.shape)
        out[c0 : c0 + chunk] = 2.0 * math.sqrt(2.0) * np.sum(vals * wts, axis=(1, 2))
    return out


def heat_kernel_array(n: int, t: float, rho, shifted: bool = False) -> np.ndarray:
    """Vectorised heat kernel ``p_t(rho)`` (or ``e^{(n-1)^2 t/4} p_t`` when ``shifted``)."""
    if not t > 0:
        raise DomainError(f"t={t} must be positive")
    if n < 2:
        raise DomainError("n must be at least 2")
    rho_a = np.asarray(rho, dtype=float)
    if np.any(rho_a < 0):
        raise DomainError("rho must be nonnegative")
    if n % 2:
        q = _odd_shifted(n, t, rho_a.ravel())
    else:
        q = _even_shifted(n, t, rho_a.ravel())
    if not shifted:
        q = q * math.exp(-(n - 1) ** 2 * t / 4.0)
    return q.reshape(rho_a.shape)


def heat_kernel(q: HeatQuery) -> float:
    """Heat kernel for a validated :class:`HeatQuery`."""
    return float(heat_kernel_array(q.n, q.t, q.rho, q.shifted))
