"""Battery of numerical checks on the kernels, heat kernels and inequalities.

Each check returns a :class:`CheckResult` carrying pass/fail, the worst
margin found and structured details. :func:`run_suite` runs a selection and
returns JSON-ready verdicts. Outputs contain no timings, so a fixed seed
reproduces them byte for byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .heat import heat_kernel_array
from .kernels import (
    BoggioBall,
    Fractional,
    GJMSWhole,
    LegendreResolvent,
    Product,
    Shifted,
    asymptotic_check,
    boggio_H,
    bound_check,
    eval_kernel,
    green_reflection_checks,
    hyperbolic_reflection_checks,
    monotonicity_check,
    pk_bound,
    resolvent_h3,
    spec_to_dict,
)
from .quad import graded_rule, panel_rule, radial_convolve, radial_integral
from .specfun import DomainError, hls_constant, hls_exponent


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "worst_margin": _clean(self.worst_margin),
                "details": _clean(self.details)}


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _label(spec) -> str:
    d = spec_to_dict(spec)
    kind = d.pop("type")
    return kind + "{" + ",".join(f"{k}={v}" for k, v in d.items()) + "}"


# ----------------------------------------------------------------------------
# closed-form oracles


def check_resolvent(zetas=(0.0, 0.5, 1.0, 2.0), points: int = 50, rtol: float = 1e-6) -> CheckResult:
    """Fractional{3,2} and Shifted{3,2,zeta} against ``e^{-zeta rho}/(4 pi sinh rho)``."""
    rho = np.linspace(0.01, 5.0, points)
    rows = {}
    worst = 0.0
    specs = [(Fractional(3, 2.0), 0.0)] + [(Shifted(3, 2.0, z), z) for z in zetas]
    for spec, z in specs:
        err = float(np.max(np.abs(eval_kernel(spec, rho) / resolvent_h3(z, rho) - 1.0)))
        rows[_label(spec)] = err
        worst = max(worst, err)
    return CheckResult("resolvent_h3", worst <= rtol, worst, {"rtol": rtol, "max_rel_error": rows})


def check_legendre_resolvent(zetas=(0.5, 1.0, 1.5, 2.0, 3.0), points: int = 10, rtol: float = 1e-6) -> CheckResult:
    """LegendreResolvent at ``lambda = zeta^2 - 1`` in ``n = 3`` against the closed form."""
    rho = np.linspace(0.1, 4.0, points)
    rows, worst = {}, 0.0
    for z in zetas:
        spec = LegendreResolvent(3, z * z - 1.0)
        err = float(np.max(np.abs(eval_kernel(spec, rho) / resolvent_h3(z, rho) - 1.0)))
        rows[f"zeta={z}"] = err
        worst = max(worst, err)
    return CheckResult("legendre_resolvent", worst <= rtol, worst, {"rtol": rtol, "max_rel_error": rows})


# ----------------------------------------------------------------------------
# heat kernel


def check_heat(times=(0.1, 1.0), tol3: float = 1e-8, tol4: float = 1e-4, rhos=(0.5, 1.0, 2.0),
               rtol_semigroup: float = 1e-6) -> CheckResult:
    """Mass one for ``n = 3, 4`` and ``p_{1/2} * p_{1/2} = p_1`` in ``n = 3``."""
    mass = {}
    worst = 0.0
    ok = True
    for n, tol in ((3, tol3), (4, tol4)):
        for t in times:
            m = radial_integral(n, lambda r, t=t, n=n: heat_kernel_array(n, t, r), math.inf)
            err = abs(m - 1.0)
            mass[f"n={n},t={t}"] = err
            ok &= err <= tol
            worst = max(worst, err / tol)
    semi = {}
    half = lambda r: heat_kernel_array(3, 0.5, r)  # noqa: E731
    for r in rhos:
        conv = radial_convolve(3, half, half, r)
        err = abs(conv / float(heat_kernel_array(3, 1.0, r)) - 1.0)
        semi[f"rho={r}"] = err
        ok &= err <= rtol_semigroup
        worst = max(worst, err / rtol_semigroup)
    return CheckResult("heat_kernel", bool(ok), worst,
                       {"mass_error": mass, "semigroup_rel_error": semi, "tolerances": [tol3, tol4, rtol_semigroup],
                        "margin_unit": "error / tolerance"})


# ----------------------------------------------------------------------------
# Boggio kernel inequalities


def check_h_signs(pairs=((4, 1), (5, 2), (7, 3)), samples: int = 10000, seed: int = 0) -> CheckResult:
    """Signs ``H_s < 0``, ``H_t > 0``, ``H_st < 0`` on random ``(s, t)`` in ``(0, 10]^2``."""
    rng = np.random.default_rng(seed)
    rows = {}
    total = 0
    worst = -math.inf
    for n, k in pairs:
        s = 10.0 * (1.0 - rng.random(samples))
        t = 10.0 * (1.0 - rng.random(samples))
        _, Hs, Ht, Hst = boggio_H(n, k, s, t)
        bad = int(np.sum(Hs >= 0) + np.sum(Ht <= 0) + np.sum(Hst >= 0))
        rows[f"n={n},k={k}"] = {"violations": bad, "max_H_s": float(np.max(Hs)), "min_H_t": float(np.min(Ht)),
                                "max_H_st": float(np.max(Hst))}
        total += bad
        worst = max(worst, float(np.max(Hs)), -float(np.min(Ht)), float(np.max(Hst)))
    return CheckResult("H_partial_signs", total == 0, worst, {"samples": samples, "cases": rows})


def check_boggio_reflection(cases=((5, 2, 0.7), (3, 1, 0.6)), samples: int = 10000, seed: int = 0,
                            tol: float = 1e-10, leaf_samples: int = 2000) -> CheckResult:
    """Derivative and reflection inequalities of the Boggio kernel on sampled configurations."""
    rows = {}
    viol = 0
    worst = -math.inf
    for n, k, R in cases:
        spec = BoggioBall(n, k, R)
        rep = green_reflection_checks(spec, samples, seed, tol)
        hyp = hyperbolic_reflection_checks(spec, leaf_samples, seed, tol)
        rows[_label(spec)] = {"euclidean_plane": rep.to_dict(), "hyperbolic_leaf": hyp.to_dict()}
        viol += rep.violations + hyp.violations
        for c in list(rep.checks.values()) + list(hyp.checks.values()):
            worst = max(worst, c["worst_margin"])
    return CheckResult("boggio_reflection", viol == 0, worst, {"tolerance": tol, "cases": rows})


# ----------------------------------------------------------------------------
# kernel estimates


def default_suite(dimensions: Sequence[int] = (3, 4, 5)) -> list:
    """Kernel specs exercised by the monotonicity check."""
    out = []
    for n in dimensions:
        out += [Fractional(n, a) for a in (0.5, 1.0, 1.5, 2.0, 2.5)]
        out += [Shifted(n, 2.0, z) for z in (0.5, 1.0, 2.0)]
        out += [Shifted(n, 1.5, 1.5)]
        out += [GJMSWhole(n, k) for k in range(1, (n + 1) // 2) if 2 * k < n]
    if 5 in dimensions:
        out.append(Product(5, ((2.0, 0.5), (2.0, 1.5))))
    if 3 in dimensions:
        out += [LegendreResolvent(3, z * z - 1.0) for z in (0.5, 1.0, 2.0)]
    return out


def check_monotonicity(dimensions=(3, 4, 5), points: int = 200, rho_max: float = 6.0) -> CheckResult:
    """Every default-suite kernel positive and strictly decreasing on a grid in ``(0, rho_max]``."""
    rho = np.linspace(rho_max / points, rho_max, points)
    rows = {}
    viol = 0
    worst = -math.inf
    for spec in default_suite(dimensions):
        r = monotonicity_check(spec, rho, tol=0.0)
        bad = r["violations"] + (0 if r["all_positive"] else 1)
        rows[_label(spec)] = r
        viol += bad
        worst = max(worst, r["worst"])
    return CheckResult("kernel_monotonicity", viol == 0, worst, {"grid": [float(rho[0]), rho_max, points], "kernels": rows})


def asymptotic_suite(dimensions=(3, 4, 5)) -> list:
    out = []
    for n in dimensions:
        for a in (0.5, 1.0, 1.5, 2.0, 2.5):
            out.append(Fractional(n, a))
            out += [Shifted(n, a, z) for z in (0.5, 1.5)]
    if 5 in dimensions:
        out.append(Product(5, ((2.0, 0.5), (2.0, 1.5))))
    return out


def asymptotic_table(dimensions=(3, 4, 5), points: int = 25, gate_rho: float = 1e-2) -> list:
    """Ratio ``gamma(sigma) rho^{n-sigma} K`` on ``[1e-3, 1e-1]`` with fitted ``C`` and the value at ``gate_rho``."""
    rho = np.geomspace(1e-3, 1e-1, points)
    rows = []
    for spec in asymptotic_suite(dimensions):
        tab = asymptotic_check(spec, rho)
        at = float(asymptotic_check(spec, np.array([gate_rho])).ratio[0])
        rows.append({"spec": _label(spec), "epsilon": tab.epsilon, "C": tab.C,
                     "max_ratio_minus_one": float(np.max(tab.ratio - 1.0)),
                     "min_ratio_minus_one": float(np.min(tab.ratio - 1.0)),
                     "ratio_at_gate": at, "shifted": isinstance(spec, Shifted)})
    return rows


def check_asymptotics(dimensions=(3, 4, 5), gate: float = 0.02, gate_rho: float = 1e-2) -> CheckResult:
    """Small-distance normalisation of the kernels.

    Unshifted kernels must satisfy ``|ratio - 1| <= gate`` at ``gate_rho``;
    shifted kernels are checked one-sidedly, ``ratio <= 1 + gate``, since the
    shift only lowers the kernel.
    """
    rows = asymptotic_table(dimensions, gate_rho=gate_rho)
    worst = -math.inf
    ok = True
    for r in rows:
        dev = r["ratio_at_gate"] - 1.0
        m = dev if r["shifted"] else abs(dev)
        r["gate_margin"] = m - gate
        ok &= m <= gate
        worst = max(worst, m - gate)
    return CheckResult("kernel_asymptotics", bool(ok), worst, {"gate": gate, "gate_rho": gate_rho, "rows": rows})


def check_pk_estimate(pairs=((5, 2), (7, 2), (7, 3)), points: int = 50, saturate_rtol: float = 1e-8) -> CheckResult:
    """``P_k^{-1}`` below its closed bound, with equality for ``(n, k) = (3, 1)``."""
    rho = np.geomspace(0.05, 6.0, points)
    rows = {}
    ok = True
    worst = -math.inf
    for n, k in pairs:
        rep = bound_check(GJMSWhole(n, k), rho, rtol=1e-12)
        c = rep.checks["pk_upper_bound"]
        rows[f"n={n},k={k}"] = c
        ok &= rep.ok
        worst = max(worst, c["worst_margin"])
    sat = float(np.max(np.abs(eval_kernel(GJMSWhole(3, 1), rho) / pk_bound(3, 1, rho) - 1.0)))
    rows["n=3,k=1 saturation"] = sat
    ok &= sat <= saturate_rtol
    return CheckResult("pk_estimate", bool(ok), worst, {"rho_range": [0.05, 6.0, points], "cases": rows})


# ----------------------------------------------------------------------------
# Hardy-Littlewood-Sobolev


def _angular_hls(r, p, lam: float):
    """``sinh r sinh p int_{S^2} (2 sinh(d/2))^{-lam} domega`` for ``n = 3``."""
    a = 2.0 * np.sinh(0.5 * (r + p))
    b = 2.0 * np.abs(np.sinh(0.5 * (r - p)))
    with np.errstate(divide="ignore"):
        if abs(lam - 2.0) < 1e-14:
            core = 2.0 * math.pi * np.log(a / b) * 2.0
        else:
            core = 4.0 * math.pi / (2.0 - lam) * (a ** (2.0 - lam) - b ** (2.0 - lam))
    return 0.5 * np.sinh(r) * np.sinh(p) * core


class RadialHLS:
    """Quadrature for the HLS bilinear form of radial profiles on ``H^3``.

    ``form(f, g) = int int f(x) g(y) (2 sinh(d(x,y)/2))^{-lam} dV_x dV_y``,
    reduced to a double radial integral with the angular part in closed form;
    the inner rule is graded into the diagonal singularity.
    """

    def __init__(self, lam: float = 2.0, rho_max: float = 12.0, panels: int = 24, m: int = 12,
                 levels: int = 14, m_inner: int = 10):
        if not 0 < lam < 3:
            raise DomainError("lambda must lie in (0, 3) for n = 3")
        self.lam = lam
        self.p = hls_exponent(3, lam)
        self.C = hls_constant(3, lam)
        self.r, self.wr = panel_rule(np.linspace(0.0, rho_max, panels + 1), m)
        inner_x, inner_w, owner = [], [], []
        for i, r in enumerate(self.r):
            x1, w1, _, _ = graded_rule(0.0, r, False, 0.0, levels, m_inner)
            x2, w2, _, _ = graded_rule(r, rho_max, True, 0.0, levels, m_inner, head=min(1.0, rho_max - r))
            x = np.concatenate([x1, x2])
            w = np.concatenate([w1, w2]) * _angular_hls(r, x, lam) * 4.0 * math.pi
            inner_x.append(x)
            inner_w.append(w)
            owner.append(np.full(x.size, i))
        self.x = np.concatenate(inner_x)
        self.w = np.concatenate(inner_w)
        self.owner = np.concatenate(owner)

    def form(self, f: Callable, g: Callable) -> float:
        inner = np.bincount(self.owner, weights=self.w * g(self.x), minlength=self.r.size)
        return float(np.dot(self.wr * f(self.r), inner))

    def norm(self, f: Callable) -> float:
        v = 4.0 * math.pi * np.dot(self.wr, np.abs(f(self.r)) ** self.p * np.sinh(self.r) ** 2)
        return float(v ** (1.0 / self.p))


def random_profile(rng) -> Callable:
    """Positive radial profile: a sum of 1 to 3 Gaussians in ``rho`` with random heights and widths."""
    k = int(rng.integers(1, 4))
    a = rng.uniform(0.1, 1.0, k)
    b = rng.uniform(0.3, 4.0, k)
    c = rng.uniform(0.0, 1.5, k)

    def f(r):
        r = np.asarray(r, dtype=float)
        return np.sum(a[:, None] * np.exp(-b[:, None] * (r[None, :] - c[:, None]) ** 2), axis=0).reshape(r.shape)

    return f


def check_hls(pairs: int = 100, lam: float = 2.0, seed: int = 0) -> CheckResult:
    """``form(f, g) <= C_{3,lam} |f|_p |g|_p`` for seeded random positive radial profiles."""
    rng = np.random.default_rng(seed)
    q = RadialHLS(lam)
    ratios = []
    for _ in range(pairs):
        f, g = random_profile(rng), random_profile(rng)
        ratios.append(q.form(f, g) / (q.C * q.norm(f) * q.norm(g)))
    ratios = np.array(ratios)
    return CheckResult("hls_spot_check", bool(np.all(ratios <= 1.0)), float(np.max(ratios) - 1.0),
                       {"pairs": pairs, "lambda": lam, "p": q.p, "C": q.C, "max_ratio": float(np.max(ratios)),
                        "violations": int(np.sum(ratios > 1.0))})


# ----------------------------------------------------------------------------
# suite


CHECKS: Dict[str, Callable] = {
    "resolvent_h3": lambda p: check_resolvent(),
    "legendre_resolvent": lambda p: check_legendre_resolvent(),
    "heat_kernel": lambda p: check_heat(),
    "H_partial_signs": lambda p: check_h_signs(samples=p["samples"], seed=p["seed"]),
    "boggio_reflection": lambda p: check_boggio_reflection(samples=p["samples"], seed=p["seed"]),
    "kernel_monotonicity": lambda p: check_monotonicity(p["dimensions"]),
    "kernel_asymptotics": lambda p: check_asymptotics(p["dimensions"]),
    "pk_estimate": lambda p: check_pk_estimate(),
    "hls_spot_check": lambda p: check_hls(p["hls_pairs"], seed=p["seed"]),
}


def run_suite(checks: Optional[Sequence[str]] = None, dimensions=(3, 4, 5), samples: int = 10000,
              seed: int = 0, hls_pairs: int = 100, progress: Callable = None) -> List[CheckResult]:
    """Run the named checks (all by default) in a fixed order."""
    names = list(CHECKS) if checks is None else list(checks)
    for nm in names:
        if nm not in CHECKS:
            raise KeyError(nm)
    params = {"dimensions": tuple(dimensions), "samples": int(samples), "seed": int(seed), "hls_pairs": int(hls_pairs)}
    out = []
    for nm in names:
        res = CHECKS[nm](params)
        out.append(res)
        if progress is not None:
            progress(res)
    return out
