"""Time the compiled kernel core against the numpy fallback.

Usage: ``python benchmarks/bench_core.py [--sizes 200 800] [--repeat 3]``.
Prints one line per (routine, size) with both timings and the max relative
difference between the backends.
"""
import argparse
import time

import numpy as np

from hypgreen._backend import get_core


def _points(rng, N, n, R):
    X = rng.normal(size=(N, n))
    return X * (R * rng.uniform(0, 1, N) ** (1 / n) / np.linalg.norm(X, axis=1))[:, None]


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _rel(a, b):
    f = np.isfinite(b) & (b != 0)
    return float(np.max(np.abs(a[f] - b[f]) / np.abs(b[f])))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 800])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        fast = get_core("compiled")
    except ImportError:
        print("compiled core not built; nothing to compare")
        return 1
    slow = get_core("python")
    rng = np.random.default_rng(0)
    u0, h = np.log(1e-3), 0.02
    logv = -np.linspace(0.0, 12.0, 600)
    slope = np.gradient(logv, h)
    print(f"{'routine':<22}{'N':>6}{'compiled s':>12}{'python s':>12}{'speedup':>9}{'max rel diff':>14}")
    for N in args.sizes:
        cases = {
            "boggio n=3 k=1": (lambda b, X, Y: b.boggio_pairs(X, Y, 3, 1, 0.6), 3, 0.6),
            "boggio n=5 k=2": (lambda b, X, Y: b.boggio_pairs(X, Y, 5, 2, 0.7), 5, 0.7),
            "radial table n=3": (lambda b, X, Y: b.radial_table_pairs(X, Y, u0, h, logv, slope, -2.0), 3, 0.9),
        }
        for name, (fn, n, R) in cases.items():
            X, Y = _points(rng, N, n, R), _points(rng, N, n, R)
            tf, a = _best(lambda: fn(fast, X, Y), args.repeat)
            ts, b = _best(lambda: fn(slow, X, Y), args.repeat)
            print(f"{name:<22}{N:>6}{tf:>12.4f}{ts:>12.4f}{ts / tf:>9.2f}{_rel(a, b):>14.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
