"""Special functions and named constants.

Pochhammer symbols, the Gauss hypergeometric function on ``[0, 1]``, the real
Legendre combination ``q(mu, nu, z) = exp(-i pi mu) Q^mu_nu(z)``, the
normalisation ``gamma(alpha)`` of the fractional kernel, the
Hardy-Littlewood-Sobolev constant ``C_{n,lambda}``, and the Plancherel
density ``|c(lambda)|^{-2}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class DomainError(ValueError):
    """Arguments outside the domain where the function is defined."""


@dataclass(frozen=True)
class HypergeometricArgs:
    a: float
    b: float
    c: float
    z: float

    def __post_init__(self):
        if self.c <= 0 and float(self.c).is_integer():
            raise DomainError("c must not be a nonpositive integer")
        if not 0.0 <= self.z <= 1.0:
            raise DomainError(f"z={self.z} outside [0, 1]")
        if self.z == 1.0 and not self.c - self.a - self.b > 0:
            raise DomainError("series diverges at z=1 unless c-a-b > 0")


@dataclass(frozen=True)
class LegendreArgs:
    mu: float
    nu: float
    z: float

    def __post_init__(self):
        if not self.nu > -1:
            raise DomainError(f"nu={self.nu} must exceed -1")
        if not self.z > 1:
            raise DomainError(f"z={self.z} must exceed 1")
        if not self.nu + self.mu + 1 > 0:
            raise DomainError("nu + mu + 1 must be positive")


def pochhammer(a: float, k: int) -> float:
    """Rising factorial ``(a)_k`` with ``(a)_0 = 1``."""
    k = int(k)
    if k < 0:
        raise DomainError("k must be nonnegative")
    out = 1.0
    for j in range(k):
        out *= a + j
    return out


def _series_2f1(a, b, c, z, rtol=1e-16, max_terms=20000):
    term = 1.0
    total = 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
        if term == 0.0 or abs(term) <= rtol * abs(total):
            # guard against a single small term when a+k passes near zero
            if k > 2 or term == 0.0:
                return total
    raise DomainError("hypergeometric series did not converge")


def _rgamma(x):
    return special.rgamma(x)


def gauss_2f1(args: HypergeometricArgs) -> float:
    """Gauss hypergeometric ``F(a, b; c; z)`` for real ``z`` in ``[0, 1]``."""
    a, b, c, z = args.a, args.b, args.c, float(args.z)
    if z == 0.0:
        return 1.0
    if (a <= 0 and float(a).is_integer()) or (b <= 0 and float(b).is_integer()):
        return _series_2f1(a, b, c, z)
    s = c - a - b
    if z == 1.0:
        return float(special.gamma(c) * special.gamma(s) * _rgamma(c - a) * _rgamma(c - b))
    if z <= 0.9:
        return _series_2f1(a, b, c, z)
    if abs(s - round(s)) < 1e-12:
        # logarithmic connection case
        return float(special.hyp2f1(a, b, c, z))
    w = 1.0 - z
    g = special.gamma
    t1 = g(c) * g(s) * _rgamma(c - a) * _rgamma(c - b) * _series_2f1(a, b, 1.0 - s, w)
    t2 = (
        w ** s
        * g(c)
        * g(-s)
        * _rgamma(a)
        * _rgamma(b)
        * _series_2f1(c - a, c - b, 1.0 + s, w)
    )
    return float(t1 + t2)


def hyp2f1(a, b, c, z) -> float:
    return gauss_2f1(HypergeometricArgs(a, b, c, z))


def legendre_q_real(args: LegendreArgs) -> float:
    """Real combination ``q(mu, nu, z)`` of the Legendre function of the second kind.

    ``q = 2^{-nu-1} Gamma(nu+mu+1)/Gamma(nu+1) (z^2-1)^{-mu/2}
    int_0^pi (z + cos t)^{mu-nu-1} (sin t)^{2 nu + 1} dt``.
    """
    mu, nu, z = args.mu, args.nu, float(args.z)
    p = mu - nu - 1.0
    e = 2.0 * nu + 1.0
    # integrate over [0, pi/2] and [pi/2, pi] in the variable u = pi - t on the
    # second half so the algebraic endpoint weights sit at 0 and pi.
    def f_left(t):
        return (z + math.cos(t)) ** p * (math.sin(t) / t) ** e if t > 0 else (z + 1.0) ** p

    def f_right(u):
        # (z + cos(pi-u)) = z - cos u = (z - 1) + 2 sin^2(u/2)
        base = (z - 1.0) + 2.0 * math.sin(0.5 * u) ** 2
        return base ** p * (math.sin(u) / u) ** e if u > 0 else (z - 1.0) ** p

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    left, _ = integrate.quad(f_left, 0.0, 0.5 * math.pi, weight="alg", wvar=(e, 0.0), **opts)
    u_peak = math.sqrt(max(z - 1.0, 0.0))
    right = 0.0
    # scale break near the (z-1)-sized peak
    pts = sorted({min(0.5 * math.pi, c * u_peak) for c in (1.0, 10.0, 100.0)} - {0.0, 0.5 * math.pi})
    edges = [0.0] + pts + [0.5 * math.pi]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0:
            val, _ = integrate.quad(f_right, lo, hi, weight="alg", wvar=(e, 0.0), **opts)
        else:
            val, _ = integrate.quad(lambda u: f_right(u) * u ** e, lo, hi, **opts)
        right += val
    pref = 2.0 ** (-nu - 1) * math.exp(special.gammaln(nu + mu + 1) - special.gammaln(nu + 1))
    return float(pref * (z * z - 1.0) ** (-0.5 * mu) * (left + right))


def resolvent_theta(n: int, lam: float) -> float:
    """``theta_n(lambda) = sqrt(lambda + (n-1)^2/4) - 1/2``."""
    disc = lam + (n - 1) ** 2 / 4.0
    if disc < 0:
        raise DomainError("lambda below the bottom of the spectrum")
    return math.sqrt(disc) - 0.5


def legendre_resolvent(n: int, lam: float, rho: float) -> float:
    """Green's function of ``-Delta + lambda`` on ``H^n`` via the Legendre function."""
    mu = 0.5 * (n - 2)
    nu = resolvent_theta(n, lam)
    q = legendre_q_real(LegendreArgs(mu, nu, math.cosh(rho)))
    return (2.0 * math.pi) ** (-0.5 * n) * math.sinh(rho) ** (-mu) * q


def gamma_norm(n: int, alpha: float) -> float:
    """``gamma(alpha) = pi^{n/2} 2^alpha Gamma(alpha/2) / Gamma(n/2 - alpha/2)``."""
    if not 0 < alpha < n:
        raise DomainError(f"alpha={alpha} outside (0, {n})")
    return float(math.pi ** (n / 2) * 2.0 ** alpha * special.gamma(alpha / 2) * special.rgamma(n / 2 - alpha / 2))


def hls_constant(n: int, lam: float) -> float:
    """Sharp Hardy-Littlewood-Sobolev constant ``C_{n,lambda}`` for ``p = 2n/(2n - lambda)``."""
    if not 0 < lam < n:
        raise DomainError(f"lambda={lam} outside (0, {n})")
    g = special.gammaln
    log_c = (
        0.5 * lam * math.log(math.pi)
        + g(n / 2 - lam / 2)
        - g(n - lam / 2)
        + (-1.0 + lam / n) * (g(n / 2) - g(n))
    )
    return math.exp(log_c)


def hls_exponent(n: int, lam: float) -> float:
    """Lebesgue exponent ``p = 2n / (2n - lambda)`` paired with ``C_{n,lambda}``."""
    return 2.0 * n / (2.0 * n - lam)


def harish_chandra_c(n: int, lam) -> np.ndarray:
    """Harish-Chandra ``c(lambda)`` as a complex number (``lambda != 0``)."""
    lam = np.asarray(lam, dtype=complex)
    il = 1j * lam
    lg = special.loggamma
    log_c = (
        (n - 1 - il) * math.log(2.0)
        + lg(n / 2)
        + lg(il)
        - lg((n - 1 + il) / 2)
        - lg((1 + il) / 2)
    )
    return np.exp(log_c)


def plancherel_density(n: int, lam) -> np.ndarray:
    """``|c(lambda)|^{-2}``; zero at ``lambda = 0``."""
    lam_arr = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam_arr)
    nz = lam_arr != 0
    if np.any(nz):
        c = harish_chandra_c(n, np.abs(lam_arr[nz]))
        out[nz] = 1.0 / np.abs(c) ** 2
    return out if out.ndim else float(out)
