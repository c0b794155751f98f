"""Green's functions on ``H^n`` and on geodesic balls.

Radial kernels (functions of the geodesic distance ``rho``):

* ``Fractional(n, alpha)``: ``(-Delta - (n-1)^2/4)^{-alpha/2}``
* ``Shifted(n, alpha, zeta)``: ``(-Delta - (n-1)^2/4 + zeta^2)^{-alpha/2}``
* ``Product(n, factors)``: composition of shifted factors
* ``GJMSWhole(n, k)``: ``P_k^{-1}`` with ``P_k = prod_{j<k} (P_1 + j(j+1))``
* ``LegendreResolvent(n, lam)``: ``(-Delta + lam)^{-1}``

and the two-point Dirichlet kernel ``BoggioBall(n, k, R)`` of ``P_k`` on the
Euclidean ball ``|x| < R`` inside the Poincare ball.

Fractional and shifted kernels come from the Mellin representation

    k(rho) = (1/Gamma(alpha/2)) int_0^inf t^{alpha/2-1} e^{-zeta^2 t} q_t(rho) dt,

with ``q_t`` the heat kernel without its spectral factor. In odd dimension the
heat term list integrates in closed form term by term:

    int_0^inf t^{nu-1} e^{-A/t - B t} dt = 2 (A/B)^{nu/2} K_nu(2 sqrt(A B)),

(``A^nu Gamma(-nu)`` when ``B = 0``). Even dimensions integrate the odd
kernel one dimension up along ``cosh r = cosh rho + s^2``, exactly like the
heat kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from . import heat as _heat
from ._backend import core as _core
from .geom import BallPoint, ball_distance
from .quad import gauss_legendre, radial_convolve
from .specfun import DomainError, gamma_norm, hyp2f1, legendre_resolvent


class AccuracyError(ArithmeticError):
    """Quadrature could not reach the requested tolerance."""

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved {achieved:.3e})")
        self.achieved = achieved


class SingularityError(ValueError):
    """Kernel evaluated on the diagonal."""


# ----------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class Fractional:
    n: int
    alpha: float

    def __post_init__(self):
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not 0 < self.alpha < 3:
            raise DomainError(f"alpha={self.alpha} must lie in (0, 3)")

    @property
    def sigma(self) -> float:
        return float(self.alpha)


@dataclass(frozen=True)
class Shifted:
    n: int
    alpha: float
    zeta: float

    def __post_init__(self):
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not 0 < self.alpha < 3:
            raise DomainError(f"alpha={self.alpha} must lie in (0, 3)")
        if not self.zeta >= 0:
            raise DomainError("zeta must be nonnegative")

    @property
    def sigma(self) -> float:
        return float(self.alpha)


@dataclass(frozen=True)
class Product:
    n: int
    factors: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple((float(s), float(z)) for s, z in self.factors))
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not self.factors:
            raise DomainError("at least one factor required")
        for s, z in self.factors:
            if z < 0:
                raise DomainError("zeta_j must be nonnegative")
            if not 0 < s < 3:
                raise DomainError(f"s_j={s} must lie in (0, 3)")
        if not self.sigma < self.n:
            raise DomainError("sum of s_j must be below n")
        if sum(s for s, z in self.factors if z == 0) >= 3:
            raise DomainError("unshifted factors must have total order below 3")

    @property
    def sigma(self) -> float:
        return float(sum(s for s, _ in self.factors))


@dataclass(frozen=True)
class GJMSWhole:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not (1 <= self.k and 2 * self.k < self.n):
            raise DomainError(f"k={self.k} must satisfy 1 <= k < n/2")

    @property
    def sigma(self) -> float:
        return 2.0 * self.k

    def zetas(self) -> List[float]:
        return [(2 * j + 1) / 2.0 for j in range(self.k)]


@dataclass(frozen=True)
class BoggioBall:
    n: int
    k: int
    R: float

    def __post_init__(self):
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not (1 <= self.k and 2 * self.k < self.n):
            raise DomainError(f"k={self.k} must satisfy 1 <= k < n/2")
        if not 0 < self.R < 1:
            raise DomainError("R must lie in (0, 1)")

    @property
    def sigma(self) -> float:
        return 2.0 * self.k


@dataclass(frozen=True)
class LegendreResolvent:
    n: int
    lam: float

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if self.lam < -((self.n - 1) ** 2) / 4.0:
            raise DomainError("lambda below the bottom of the spectrum")

    @property
    def sigma(self) -> float:
        return 2.0


KernelSpec = Union[Fractional, Shifted, Product, GJMSWhole, BoggioBall, LegendreResolvent]

_SPEC_TYPES = {
    "Fractional": Fractional,
    "Shifted": Shifted,
    "Product": Product,
    "GJMSWhole": GJMSWhole,
    "BoggioBall": BoggioBall,
    "LegendreResolvent": LegendreResolvent,
}


def spec_from_dict(d: dict) -> KernelSpec:
    """Build a spec from ``{"type": "Shifted", "n": 3, ...}``."""
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _SPEC_TYPES:
        raise DomainError(f"unknown kernel type {kind!r}")
    if kind == "Product":
        d["factors"] = tuple(tuple(f) for f in d.get("factors", ()))
    if kind == "LegendreResolvent" and "lambda" in d:
        d["lam"] = d.pop("lambda")
    try:
        return _SPEC_TYPES[kind](**d)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind}: {exc}") from None


def spec_to_dict(spec: KernelSpec) -> dict:
    out = {"type": type(spec).__name__}
    for k, v in spec.__dict__.items():
        out[k] = [list(f) for f in v] if k == "factors" else v
    return out


# ----------------------------------------------------------------------------
# Mellin evaluation


def _log_mellin_weight(nu, rho, zeta):
    """``log int_0^inf t^{nu-1} exp(-rho^2/(4t) - zeta^2 t) dt`` for ``nu < 0``."""
    if zeta == 0.0:
        return nu * np.log(0.25 * rho * rho) + special.gammaln(-nu)
    rho = np.asarray(rho, dtype=float)
    x = rho * zeta
    # the zeta -> 0 limit is reached to O(x^{min(2, -2 nu)}) relative
    tiny = x ** min(2.0, -2.0 * nu) < 1e-17 if nu < 0 else np.zeros(x.shape, dtype=bool)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        bessel = math.log(2.0) + nu * (np.log(rho) - math.log(2.0 * zeta)) + np.log(special.kve(nu, x)) - x
    if np.any(tiny):
        bessel = np.where(tiny, nu * np.log(0.25 * rho * rho) + special.gammaln(-nu), bessel)
    return bessel


def _mellin_odd(n, alpha, zeta, rho):
    m = (n - 1) // 2
    rho = np.asarray(rho, dtype=float)
    pref = 2.0 ** (-m - 1) * math.pi ** (-m - 0.5) / math.gamma(0.5 * alpha)
    ls = _heat._log_sinh(rho)
    lr = np.log(rho)
    coth = 1.0 / np.tanh(rho)
    out = np.zeros_like(rho)
    weights = {}
    for c, a, b, e, d in _heat.odd_terms(m):
        nu = 0.5 * alpha - 0.5 - d
        if d not in weights:
            weights[d] = _log_mellin_weight(nu, rho, zeta)
        out += c * np.exp(a * lr - e * ls + weights[d]) * coth ** b
    return pref * out


def _s_panels(rho, far=80.0, m=16):
    """s-nodes for ``int_0^inf F(r(s)) ds`` with ``cosh r = cosh rho + s^2``."""
    s0 = 0.1 * min(rho, 1.0)
    s_max = math.sqrt(2.0 * (math.sinh(0.5 * (rho + far)) ** 2 - math.sinh(0.5 * rho) ** 2))
    e1 = s0 * 2.0 ** np.arange(0, max(int(math.ceil(math.log2(max(1.0, 1.0) / s0))), 1) + 1)
    e1 = e1[e1 < 1.0]
    e2 = 1.0 * 1.5 ** np.arange(0, int(math.ceil(math.log(s_max) / math.log(1.5))) + 1)
    edges = np.unique(np.concatenate([[0.0, s0], e1, e2]))
    x, w = gauss_legendre(m)
    lo, hi = edges[:-1, None], edges[1:, None]
    s = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    ws = (0.5 * (hi - lo) * w).ravel()
    return s, ws


def _mellin_even(n, alpha, zeta, rho):
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    out = np.empty_like(rho)
    for i, r0 in enumerate(rho):
        s, ws = _s_panels(r0)
        r = 2.0 * np.arcsinh(np.sqrt(math.sinh(0.5 * r0) ** 2 + 0.5 * s * s))
        out[i] = 2.0 * math.sqrt(2.0) * np.dot(_mellin_odd(n + 1, alpha, zeta, r), ws)
    return out


def shifted_kernel(n, alpha, zeta, rho) -> np.ndarray:
    """Vectorised ``(-Delta - (n-1)^2/4 + zeta^2)^{-alpha/2}`` kernel at ``rho > 0``."""
    rho_a = np.asarray(rho, dtype=float)
    flat = rho_a.ravel()
    if n % 2:
        out = _mellin_odd(n, alpha, float(zeta), flat)
    else:
        out = _mellin_even(n, alpha, float(zeta), flat)
    return out.reshape(rho_a.shape)


def partial_fraction_coefficients(zetas: Sequence[float]) -> np.ndarray:
    """``c_j`` with ``prod_j (A + zeta_j^2)^{-1} = sum_j c_j (A + zeta_j^2)^{-1}``."""
    z2 = np.asarray(zetas, dtype=float) ** 2
    c = np.empty_like(z2)
    for j in range(z2.size):
        others = np.delete(z2, j)
        c[j] = 1.0 / np.prod(others - z2[j])
    return c


def gjms_kernel(n, k, rho) -> np.ndarray:
    """``P_k^{-1}`` on ``H^n`` by partial fractions over ``zeta_j = j + 1/2``."""
    zs = [(2 * j + 1) / 2.0 for j in range(k)]
    c = partial_fraction_coefficients(zs)
    rho_a = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho_a)
    for cj, zj in zip(c, zs):
        out = out + cj * shifted_kernel(n, 2.0, zj, rho_a)
    return out


# ----------------------------------------------------------------------------
# radial profiles


@dataclass
class RadialProfile:
    """A sampled radial function with a monotone log-log interpolant.

    Below ``rho[0]`` the local power law is continued; above ``rho[-1]``
    ``log value`` is continued linearly in ``rho``.
    """

    spec: Optional[KernelSpec]
    rho: np.ndarray
    values: np.ndarray
    accuracy: float = 0.0
    rel_err: Optional[np.ndarray] = None
    extrapolates: bool = True
    _interp: object = field(default=None, repr=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.rho.shape != self.values.shape or self.rho.ndim != 1:
            raise DomainError("rho and values must be equal-length vectors")
        if np.any(np.diff(self.rho) <= 0) or self.rho[0] <= 0:
            raise DomainError("rho must be positive and strictly increasing")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise DomainError("profile values must be finite and positive")
        if self.rel_err is None:
            self.rel_err = np.full(self.rho.shape, self.accuracy)
        u, v = np.log(self.rho), np.log(self.values)
        self._interp = PchipInterpolator(u, v, extrapolate=False)
        d = self._interp.derivative()(u)
        self._slope = np.asarray(d, dtype=float)
        # tail slope of log v in rho
        self._tail = float(d[-1] / self.rho[-1])

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    def log_value(self, r):
        r = np.asarray(r, dtype=float)
        u = np.log(np.maximum(r, 1e-300))
        out = self._interp(np.clip(u, np.log(self.rho[0]), np.log(self.rho[-1])))
        lo = r < self.rho[0]
        hi = r > self.rho[-1]
        out = np.where(lo, np.log(self.values[0]) + self._slope[0] * (u - math.log(self.rho[0])), out)
        out = np.where(hi, np.log(self.values[-1]) + self._tail * (r - self.rho[-1]), out)
        return out

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(self.log_value(np.abs(r)))

    def uniform_table(self, points_per_unit: int = 200):
        """Resample onto a uniform ``log rho`` grid: ``(u0, h, logv, slope, tail)``."""
        u_lo, u_hi = math.log(self.rho[0]), math.log(self.rho[-1])
        N = int(math.ceil((u_hi - u_lo) * points_per_unit)) + 1
        u = np.linspace(u_lo, u_hi, N)
        logv = self._interp(u)
        slope = self._interp.derivative()(u)
        h = (u_hi - u_lo) / (N - 1)
        return u_lo, h, np.ascontiguousarray(logv), np.ascontiguousarray(slope), self._tail

    def to_csv(self) -> str:
        lines = ["rho,value,rel_err"]
        for r, v, e in zip(self.rho, self.values, self.rel_err):
            lines.append(f"{float(r)!r},{float(v)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, spec=None) -> "RadialProfile":
        body = [ln for ln in text.strip().splitlines() if not ln.startswith("#")]
        rows = [ln.split(",") for ln in body[1:]]
        arr = np.array(rows, dtype=float)
        return cls(spec, arr[:, 0], arr[:, 1], float(arr[:, 2].max()), arr[:, 2])


def default_grid(n_points: int = 600, rho_min: float = 1e-6, rho_max: float = 60.0) -> np.ndarray:
    return np.geomspace(rho_min, rho_max, n_points)


def tabulate(spec: KernelSpec, rho=None, accuracy: Optional[float] = None) -> RadialProfile:
    """Sample a radial kernel into a :class:`RadialProfile`."""
    rho = default_grid() if rho is None else np.asarray(rho, dtype=float)
    vals = eval_kernel(spec, rho)
    if accuracy is None:
        accuracy = 1e-4 if isinstance(spec, Product) and len(spec.factors) > 1 else 1e-6
    return RadialProfile(spec, rho, vals, accuracy)


# ----------------------------------------------------------------------------
# product kernels


def _factor_callable(n, s, z):
    if n % 2:
        return lambda r: shifted_kernel(n, s, z, np.maximum(np.abs(r), 1e-300))
    prof = tabulate(Shifted(n, s, z), default_grid(900, 1e-7, 80.0))
    return prof


def _conv_tail(zmin):
    return 40.0 if zmin <= 0 else float(min(max(40.0, 36.0 / zmin), 120.0))


def product_mellin(n: int, factors, rho, nodes: int = 600) -> np.ndarray:
    """Two strictly shifted factors through one heat-semigroup integral.

    With ``a = s_1/2``, ``b = s_2/2`` and ``zeta_1 >= zeta_2 > 0``, the
    substitution ``t_1 = T x``, ``t_2 = T (1 - x)`` in the double Mellin
    integral gives

        K = (1/Gamma(a+b)) int_0^inf T^{a+b-1} e^{-T zeta_2^2}
            M(a, a+b, -T (zeta_1^2 - zeta_2^2)) q_T(rho) dT,

    with ``q_T`` the heat kernel without its spectral factor. The ``T``
    integral is a trapezoid rule in ``log T``.
    """
    (s1, z1), (s2, z2) = sorted(factors, key=lambda f: -f[1])
    if z2 <= 0:
        raise DomainError("product_mellin needs strictly shifted factors")
    a, b = 0.5 * s1, 0.5 * s2
    rho = np.asarray(rho, dtype=float)
    t_lo = float(np.min(rho)) ** 2 / 800.0
    t_hi = max(200.0 / (z2 * z2), 50.0)
    tau = np.linspace(math.log(t_lo), math.log(t_hi), nodes)
    T = np.exp(tau)
    w = np.exp((a + b) * tau - T * z2 * z2 - special.gammaln(a + b)) * special.hyp1f1(a, a + b, -T * (z1 * z1 - z2 * z2))
    out = np.zeros_like(rho)
    for Ti, wi in zip(T, w):
        live = rho * rho < 2400.0 * Ti  # exp(-rho^2/4T) below e^-600 elsewhere
        if np.any(live):
            out[live] += wi * _heat.heat_kernel_array(n, float(Ti), rho[live], shifted=True)
    return out * (tau[1] - tau[0])


def product_kernel(spec: Product, rho) -> np.ndarray:
    rho_a = np.atleast_1d(np.asarray(rho, dtype=float))
    n = spec.n
    facs = list(spec.factors)
    if len(facs) == 1:
        s, z = facs[0]
        return shifted_kernel(n, s, z, rho_a)
    if len(facs) == 2 and min(z for _, z in facs) > 0 and n % 2 == 1:
        return product_mellin(n, facs, rho_a)
    calls = [_factor_callable(n, s, z) for s, z in facs]
    zmin = min(z for _, z in facs)
    tail = _conv_tail(zmin)
    acc = calls[0]
    for j, g in enumerate(calls[1:], start=1):
        if j == len(calls) - 1:
            return np.array([radial_convolve(n, acc, g, r, tail=tail) for r in rho_a])
        grid = default_grid(300, 1e-5, 60.0)
        vals = np.array([radial_convolve(n, acc, g, r, tail=tail) for r in grid])
        acc = RadialProfile(None, grid, vals, 1e-4)
    raise AssertionError("unreachable")


# ----------------------------------------------------------------------------
# public evaluation


def eval_kernel(spec: KernelSpec, rho) -> np.ndarray:
    """Evaluate a radial kernel at geodesic distance(s) ``rho > 0``.

    Returns a float for scalar input and an array otherwise.
    """
    scalar = np.ndim(rho) == 0
    rho_a = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_a <= 0):
        raise DomainError("rho must be positive")
    if isinstance(spec, Fractional):
        out = shifted_kernel(spec.n, spec.alpha, 0.0, rho_a)
    elif isinstance(spec, Shifted):
        out = shifted_kernel(spec.n, spec.alpha, spec.zeta, rho_a)
    elif isinstance(spec, GJMSWhole):
        out = gjms_kernel(spec.n, spec.k, rho_a)
    elif isinstance(spec, Product):
        out = product_kernel(spec, rho_a)
    elif isinstance(spec, LegendreResolvent):
        out = np.array([legendre_resolvent(spec.n, spec.lam, r) for r in rho_a])
    elif isinstance(spec, BoggioBall):
        raise DomainError("BoggioBall is not radial; use boggio_green")
    else:
        raise DomainError(f"unknown kernel spec {spec!r}")
    if not np.all(np.isfinite(out)):
        raise AccuracyError("kernel evaluation produced non-finite values", float("inf"))
    return float(out[0]) if scalar else out


# ----------------------------------------------------------------------------
# hypergeometric form of P_k^{-1}


def pk_hypergeometric(n: int, k: int, rho, cosh_exponent: Optional[int] = None):
    """``P_k^{-1}`` from the closed hypergeometric form with cosh exponent ``E``.

    ``c_{n,k} cosh(rho/2)^{-E} sinh(rho/2)^{-(n-2k)} F(k-(n-2)/2, k; k+1; cosh^{-2}(rho/2))``
    with ``c_{n,k} = Gamma(n/2) / (2^n pi^{n/2} Gamma(k) Gamma(k+1))``.
    ``E`` defaults to the value calibrated against the resolvent product.
    """
    if not (1 <= k and 2 * k < n):
        raise DomainError(f"k={k} must satisfy 1 <= k < n/2")
    E = calibrated_cosh_exponent(n, k) if cosh_exponent is None else cosh_exponent
    c = math.gamma(0.5 * n) / (2.0 ** n * math.pi ** (0.5 * n) * math.gamma(k) * math.gamma(k + 1))
    scalar = np.ndim(rho) == 0
    rho_a = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_a <= 0):
        raise DomainError("rho must be positive")
    out = np.empty_like(rho_a)
    for i, r in enumerate(rho_a):
        ch = math.cosh(0.5 * r)
        F = hyp2f1(k - 0.5 * (n - 2), k, k + 1, 1.0 / (ch * ch))
        out[i] = c * ch ** (-E) * math.sinh(0.5 * r) ** (-(n - 2 * k)) * F
    return float(out[0]) if scalar else out


@lru_cache(maxsize=None)
def calibrated_cosh_exponent(n: int, k: int) -> int:
    """Least-squares integer exponent matching the resolvent-product evaluator."""
    grid = np.array([0.1, 0.5, 1.0, 2.0])
    ref = gjms_kernel(n, k, grid)
    base = pk_hypergeometric(n, k, grid, cosh_exponent=0)
    lc = np.log(np.cosh(0.5 * grid))
    E = float(np.dot(np.log(base / ref), lc) / np.dot(lc, lc))
    return int(round(E))


# ----------------------------------------------------------------------------
# Boggio kernel


def boggio_constant(n: int, k: int) -> float:
    """``C(n,k) = Gamma(n/2) / (4^k pi^{n/2} Gamma(k)^2)``."""
    return math.gamma(0.5 * n) / (4.0 ** k * math.pi ** (0.5 * n) * math.gamma(k) ** 2)


def boggio_theta(x, y, R: float) -> float:
    """``(R^2 - |x|^2)(R^2 - |y|^2)`` inside ``B_R``, zero otherwise."""
    x = x.coords if isinstance(x, BallPoint) else np.asarray(x, dtype=float)
    y = y.coords if isinstance(y, BallPoint) else np.asarray(y, dtype=float)
    a = R * R - x @ x
    b = R * R - y @ y
    return float(a * b) if (a > 0 and b > 0) else 0.0


def boggio_H(n: int, k: int, s, t):
    """``H(s,t) = int_0^t z^{k-1} (z+s)^{-n/2} dz`` and its partials.

    Returns ``(H, H_s, H_t, H_st)``.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0):
        raise DomainError("s must be positive")
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    a = 0.5 * n - k
    z = t / (t + s)
    H = s ** (k - 0.5 * n) * _core.incomplete_beta(z, k, a)
    Hs = -0.5 * n * s ** (k - 0.5 * n - 1.0) * _core.incomplete_beta(z, k, a + 1.0)
    with np.errstate(divide="ignore"):
        Ht = np.where(t > 0, t ** (k - 1.0), 1.0 if k == 1 else 0.0) * (t + s) ** (-0.5 * n)
    Hst = -0.5 * n * np.where(t > 0, t ** (k - 1.0), 1.0 if k == 1 else 0.0) * (t + s) ** (-0.5 * n - 1.0)
    if H.ndim == 0:
        return float(H), float(Hs), float(Ht), float(Hst)
    return H, Hs, Ht, Hst


@dataclass(frozen=True)
class BoggioValue:
    value: float
    gradient: np.ndarray
    euclidean: float
    outside: bool = False


def boggio_green(spec: BoggioBall, x, y) -> BoggioValue:
    """Dirichlet kernel of ``P_k`` on ``B_R`` with its ``x``-gradient.

    ``G = phi(x)^a phi(y)^a G_R`` with ``phi = (1-|x|^2)/2``, ``a = n/2 - k``
    and ``G_R`` the Boggio kernel of ``(-Delta)^k`` on the Euclidean ball.
    """
    xc = x.coords if isinstance(x, BallPoint) else np.asarray(x, dtype=float)
    yc = y.coords if isinstance(y, BallPoint) else np.asarray(y, dtype=float)
    if xc.shape != (spec.n,) or yc.shape != (spec.n,):
        raise DomainError("point dimension does not match the kernel")
    R2 = spec.R ** 2
    if xc @ xc >= R2 or yc @ yc >= R2:
        return BoggioValue(0.0, np.zeros(spec.n), 0.0, True)
    if np.array_equal(xc, yc):
        raise SingularityError("Boggio kernel is singular on the diagonal")
    G, grad = _core.boggio_pairs(xc[None, :], yc[None, :], spec.n, spec.k, spec.R, True)
    a = 0.5 * spec.n - spec.k
    phi = 0.25 * (1.0 - xc @ xc) * (1.0 - yc @ yc)
    return BoggioValue(float(G[0, 0]), grad[0, 0].copy(), float(G[0, 0]) * phi ** (-a))


def boggio_matrix(spec: BoggioBall, X, Y, want_grad=False):
    return _core.boggio_pairs(np.asarray(X, float), np.asarray(Y, float), spec.n, spec.k, spec.R, want_grad)


@dataclass
class ViolationReport:
    checks: dict
    samples: int
    tolerance: float

    @property
    def violations(self) -> int:
        return int(sum(c["violations"] for c in self.checks.values()))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "tolerance": self.tolerance,
            "violations": self.violations,
            "checks": self.checks,
        }


def _sample_ball(rng, count, n, radius):
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return v * r[:, None]


def _record(checks, name, margins, tol):
    """``margins`` must be negative where the inequality holds (with ``<= 0`` + tol)."""
    margins = np.asarray(margins, dtype=float)
    bad = margins > tol
    checks[name] = {
        "violations": int(np.sum(bad)),
        "worst_margin": float(np.max(margins)) if margins.size else 0.0,
        "count": int(margins.size),
    }


def _reflect_euclid(P, lam):
    Q = np.array(P, dtype=float, copy=True)
    Q[..., 0] = 2.0 * lam - Q[..., 0]
    return Q


def green_reflection_checks(spec: BoggioBall, samples: int = 10000, seed=0, tol: float = 1e-10,
                            include_lambda_zero: bool = True) -> ViolationReport:
    """Sampled sign and reflection inequalities for the Boggio kernel.

    With ``T_lam = {x_1 = lam}``, ``Sigma_lam = {x in B_R : x_1 < lam}`` and
    ``bar`` the reflection in ``T_lam``:

    * ``G_{x1}(x, y) < 0`` for ``x`` on ``T_lam``, ``y`` in ``Sigma_lam``;
    * ``G_{x1}(x, y) + G_{x1}(x, ybar) <= 0`` (strict for ``lam > 0``);
    * ``G(x, y) > max(G(x, ybar), G(xbar, y))`` for ``x, y`` in ``Sigma_lam``;
    * ``G(x, y) + G(x, ybar) > |G(x, ybar) - G(xbar, y)|``.

    Margins are scaled by ``G(x, y)`` (or ``|G_{x1}(x, y)|``) so the tolerance
    is relative. Coincident draws are rejected and redrawn.
    """
    rng = np.random.default_rng(seed)
    n, R = spec.n, spec.R
    checks: dict = {}

    def draw_sigma(lam, count):
        out = np.empty((0, n))
        while out.shape[0] < count:
            P = _sample_ball(rng, 2 * count, n, R)
            P = P[P[:, 0] < lam]
            out = np.concatenate([out, P])
        return out[:count]

    def draw_plane(lam, count):
        rad = math.sqrt(R * R - lam * lam)
        P = _sample_ball(rng, count, n - 1, rad)
        return np.concatenate([np.full((count, 1), lam), P], axis=1)

    lam = R * rng.random(samples)
    if include_lambda_zero:
        lam[: max(samples // 20, 1)] = 0.0
    d1, d2, strict, g1, g2 = [], [], [], [], []
    for i in range(samples):
        while True:
            x = draw_plane(lam[i], 1)[0]
            y = draw_sigma(lam[i], 1)[0]
            if np.linalg.norm(x - y) > 1e-8:
                break
        yb = _reflect_euclid(y, lam[i])
        G, grad = boggio_matrix(spec, x[None], np.stack([y, yb]), True)
        gx = grad[0, 0, 0]
        gxb = grad[0, 1, 0]
        scale = abs(gx)
        d1.append(gx / scale if scale > 0 else 1.0)
        d2.append((gx + gxb) / scale)
        if lam[i] > 0:
            strict.append((gx + gxb) / scale)
        # reflection inequality: x, y both in Sigma_lambda
        while True:
            xs = draw_sigma(lam[i], 1)[0]
            ys = draw_sigma(lam[i], 1)[0]
            if np.linalg.norm(xs - ys) > 1e-8:
                break
        xb = _reflect_euclid(xs, lam[i])
        ysb = _reflect_euclid(ys, lam[i])
        Gm = boggio_matrix(spec, np.stack([xs, xb]), np.stack([ys, ysb]))
        gxy, gxyb, gxby = Gm[0, 0], Gm[0, 1], Gm[1, 0]
        g1.append((max(gxyb, gxby) - gxy) / gxy)
        g2.append((abs(gxyb - gxby) - (gxy + gxyb)) / gxy)
    _record(checks, "dx1_negative_on_plane", d1, tol)
    _record(checks, "dx1_reflected_sum_nonpositive", d2, tol)
    checks["dx1_reflected_sum_nonpositive"]["strict_for_positive_lambda"] = bool(np.all(np.array(strict) < 0))
    _record(checks, "G_exceeds_reflections", g1, tol)
    _record(checks, "G_sum_exceeds_reflected_difference", g2, tol)
    return ViolationReport(checks, samples, tol)


def hyperbolic_reflection_checks(spec: BoggioBall, samples: int = 2000, seed=0, tol: float = 1e-10) -> ViolationReport:
    """Reflection inequality ``G(x,y) > G(x, I_t y)`` with the hyperbolic leaf reflection ``I_t``."""
    from .geom import FoliationLeaf, leaf_side, reflect_points

    rng = np.random.default_rng(seed)
    n, R = spec.n, spec.R
    rho_R = 2.0 * math.atanh(R)
    g1 = []
    while len(g1) < samples:
        t = rho_R * rng.random()
        leaf = FoliationLeaf(1, t)
        P = _sample_ball(rng, 2, n, R)
        if np.any(leaf_side(P, leaf) >= 0) or np.linalg.norm(P[0] - P[1]) < 1e-8:
            continue
        yb = reflect_points(P[1], leaf)
        G = boggio_matrix(spec, P[:1], np.stack([P[1], yb]))
        g1.append((G[0, 1] - G[0, 0]) / G[0, 0])
    checks: dict = {}
    _record(checks, "G_exceeds_leaf_reflection", g1, tol)
    return ViolationReport(checks, samples, tol)


# ----------------------------------------------------------------------------
# estimates


@dataclass
class RatioTable:
    spec: KernelSpec
    rho: np.ndarray
    ratio: np.ndarray
    epsilon: float
    C: float
    sigma: float

    def within(self) -> np.ndarray:
        return np.abs(self.ratio - 1.0) <= self.C * self.rho ** self.epsilon * (1 + 1e-12)

    def to_dict(self) -> dict:
        return {
            "spec": spec_to_dict(self.spec),
            "sigma": self.sigma,
            "epsilon": self.epsilon,
            "C": self.C,
            "rho": self.rho.tolist(),
            "ratio": self.ratio.tolist(),
        }


def asymptotic_exponent(spec: KernelSpec) -> float:
    """``epsilon`` of the small-distance estimate for ``spec``."""
    n, sig = spec.n, spec.sigma
    if isinstance(spec, Fractional):
        return 1.0
    if isinstance(spec, Shifted) and spec.zeta == 0.0:
        return 1.0
    return min(1.0, n - sig)


def asymptotic_check(spec: KernelSpec, rho_grid) -> RatioTable:
    """``r(rho) = gamma(sigma) rho^{n-sigma} K(rho)`` with a fitted ``C`` in ``|r-1| <= C rho^eps``."""
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(rho <= 0) or np.any(rho > 0.5):
        raise DomainError("rho grid must lie in (0, 0.5]")
    n, sig = spec.n, spec.sigma
    K = eval_kernel(spec, rho)
    ratio = gamma_norm(n, sig) * rho ** (n - sig) * K
    eps = asymptotic_exponent(spec)
    C = float(np.max(np.abs(ratio - 1.0) / rho ** eps))
    return RatioTable(spec, rho, ratio, eps, C, sig)


def pk_bound(n: int, k: int, rho) -> np.ndarray:
    """Right side ``(1/gamma(2k)) [(2 sinh(rho/2))^{-(n-2k)} - (2 cosh(rho/2))^{-(n-2k)}]``."""
    rho = np.asarray(rho, dtype=float)
    p = n - 2 * k
    return ((2.0 * np.sinh(0.5 * rho)) ** (-p) - (2.0 * np.cosh(0.5 * rho)) ** (-p)) / gamma_norm(n, 2 * k)


def bound_check(spec: KernelSpec, rho_grid, rtol: float = 1e-8) -> ViolationReport:
    """``P_k^{-1} <=`` the closed bound, or ``Shifted <= Fractional`` pointwise."""
    rho = np.asarray(rho_grid, dtype=float)
    checks: dict = {}
    if isinstance(spec, GJMSWhole):
        lhs = eval_kernel(spec, rho)
        rhs = pk_bound(spec.n, spec.k, rho)
        name = "pk_upper_bound"
    elif isinstance(spec, Shifted):
        lhs = eval_kernel(spec, rho)
        rhs = eval_kernel(Fractional(spec.n, spec.alpha), rho)
        name = "shifted_below_fractional"
    elif isinstance(spec, Fractional):
        lhs = eval_kernel(spec, rho)
        rhs = lhs.copy()
        name = "fractional_self"
    else:
        raise DomainError("bound_check supports GJMSWhole, Fractional and Shifted")
    margin = lhs / rhs - 1.0
    _record(checks, name, margin, rtol)
    checks[name]["max_ratio"] = float(np.max(lhs / rhs))
    checks[name]["min_ratio"] = float(np.min(lhs / rhs))
    return ViolationReport(checks, int(rho.size), rtol)


def monotonicity_check(spec: KernelSpec, rho_grid, tol: float = 1e-10) -> dict:
    """Count grid pairs with ``K(rho_{i+1}) >= K(rho_i)`` beyond relative ``tol``."""
    rho = np.asarray(rho_grid, dtype=float)
    K = eval_kernel(spec, rho)
    inc = K[1:] / K[:-1] - 1.0
    return {
        "violations": int(np.sum(inc > tol)),
        "strict": bool(np.all(inc < 0)),
        "worst": float(np.max(inc)),
        "all_positive": bool(np.all(K > 0)),
    }


def resolvent_h3(zeta: float, rho):
    """``e^{-zeta rho} / (4 pi sinh rho)``."""
    rho = np.asarray(rho, dtype=float)
    return np.exp(-zeta * rho) / (4.0 * math.pi * np.sinh(rho))


def odd_resolvent_recursion(n: int, zeta: float, rho) -> np.ndarray:
    """Closed-form odd-dimension resolvent via ``G_{n+2} = -(2 pi sinh rho)^{-1} d/drho G_n``.

    Returns ``(-Delta - (n-1)^2/4 + zeta^2)^{-1}``. Runs the recursion
    symbolically on terms ``c e^{-zeta rho} / sinh^e rho * coth^b rho``.
    """
    if n % 2 == 0 or n < 3:
        raise DomainError("odd n >= 3 required")
    terms = {(1, 0): 1.0 / (4.0 * math.pi)}  # (e, b): c  -> c coth^b sinh^{-e} e^{-zeta rho}
    for _ in range((n - 3) // 2):
        new: dict = {}

        def add(key, v):
            new[key] = new.get(key, 0.0) + v

        for (e, b), c in terms.items():
            # d/drho [coth^b sinh^{-e} e^{-zeta rho}]
            add((e, b), -zeta * c)
            add((e, b + 1), -e * c)
            if b:
                add((e + 2, b - 1), -b * c)
        terms = {(e + 1, b): -c / (2.0 * math.pi) for (e, b), c in new.items()}
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for (e, b), c in terms.items():
        out += c * np.exp(-zeta * rho) * np.sinh(rho) ** (-e) * (1.0 / np.tanh(rho)) ** b
    return out


def distance(x, y) -> float:
    return float(ball_distance(x, y))
