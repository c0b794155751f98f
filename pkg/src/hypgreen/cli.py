"""Command-line front end: ``hypgreen <command> --config run.json --out DIR``.

Commands: ``kernel-table``, ``verify``, ``solve``, ``symmetry``, ``heat``.
Exit status 0 on success, 1 on a failed check or non-converged run, 2 on
invalid input. Every output file embeds the artifact version and a hash of
the effective configuration; no timings are written, so identical inputs give
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from . import __version__
from .fields import MeshField
from .heat import heat_kernel_array
from .kernels import RadialProfile, eval_kernel, spec_from_dict, spec_to_dict
from .solver import ConfigError, SolveConfig, config_hash, solve_integral_equation
from .specfun import DomainError
from .symmetry import default_t_grid, moving_plane_sweep, radial_profile_check
from . import verify as _verify

COMMANDS = ("kernel-table", "verify", "solve", "symmetry", "heat")
THREADS_ENV = "HYPGREEN_THREADS"


class InputError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


# ----------------------------------------------------------------------------
# output helpers


class Output:
    """Writes files stamped with version and config hash."""

    def __init__(self, out_dir: Path, stamp: dict):
        self.dir = out_dir
        self.stamp = stamp
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def json(self, name: str, payload: dict):
        doc = {"artifact_version": self.stamp["version"], "config_hash": self.stamp["config_hash"], **payload}
        (self.dir / name).write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
        self.files.append(name)

    def csv(self, name: str, body: str):
        head = f"# artifact_version={self.stamp['version']} config_hash={self.stamp['config_hash']}\n"
        (self.dir / name).write_text(head + body)
        self.files.append(name)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _get(params: dict, key: str, default, kind=float, prefix: str = ""):
    v = params.get(key, default)
    name = prefix + key
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InputError(name, f"expected a number, got {v!r}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise InputError(name, f"expected an integer, got {v!r}")
        return int(v)
    if kind is bool:
        if not isinstance(v, bool):
            raise InputError(name, f"expected true/false, got {v!r}")
        return v
    if kind is list:
        if not isinstance(v, list):
            raise InputError(name, f"expected a list, got {v!r}")
        return v
    return v


def _check_keys(params: dict, allowed, prefix: str = ""):
    for k in params:
        if k not in allowed:
            raise InputError(prefix + k, "unknown key")


def _rho_grid(d: dict, prefix: str = "rho.") -> np.ndarray:
    _check_keys(d, {"min", "max", "points", "spacing"}, prefix)
    lo = _get(d, "min", 0.01, float, prefix)
    hi = _get(d, "max", 10.0, float, prefix)
    pts = _get(d, "points", 100, int, prefix)
    spacing = d.get("spacing", "log")
    if not 0 < lo < hi or pts < 2:
        raise InputError(prefix + "min", "need 0 < min < max and points >= 2")
    if spacing == "log":
        return np.geomspace(lo, hi, pts)
    if spacing == "linear":
        return np.linspace(lo, hi, pts)
    raise InputError(prefix + "spacing", "must be 'log' or 'linear'")


def _spec(d, key="kernel"):
    if not isinstance(d, dict):
        raise InputError(key, "expected an object")
    try:
        return spec_from_dict(d)
    except DomainError as exc:
        raise InputError(key, str(exc)) from None


# ----------------------------------------------------------------------------
# commands


def cmd_kernel_table(params: dict, out: Output, seed: int, threads: int) -> int:
    """One RadialProfile CSV per kernel, plus an index JSON."""
    _check_keys(params, {"kernel", "kernels", "rho"})
    if "kernels" in params:
        specs = [_spec(k, f"kernels[{i}]") for i, k in enumerate(_get(params, "kernels", [], list))]
    elif "kernel" in params:
        specs = [_spec(params["kernel"])]
    else:
        raise InputError("kernel", "missing")
    rho = _rho_grid(params.get("rho", {}))
    index = []
    for i, spec in enumerate(specs):
        try:
            prof = RadialProfile(spec, rho, np.asarray(eval_kernel(spec, rho)), 1e-6)
        except DomainError as exc:
            raise InputError(f"kernels[{i}]", str(exc)) from None
        name = f"kernel_{i:02d}.csv"
        out.csv(name, prof.to_csv())
        index.append({"file": name, "kernel": spec_to_dict(spec)})
    out.json("kernel_table.json", {"command": "kernel-table", "tables": index})
    return 0


def cmd_verify(params: dict, out: Output, seed: int, threads: int) -> int:
    """Run the verification battery and write one verdict per check."""
    _check_keys(params, {"checks", "dimensions", "samples", "hls_pairs"})
    checks = params.get("checks")
    if checks is not None:
        if not isinstance(checks, list):
            raise InputError("checks", "expected a list of check names")
        for c in checks:
            if c not in _verify.CHECKS:
                raise InputError("checks", f"unknown check {c!r}; known: {sorted(_verify.CHECKS)}")
    dims = _get(params, "dimensions", [3, 4, 5], list)
    for d in dims:
        if isinstance(d, bool) or not isinstance(d, int) or d < 3:
            raise InputError("dimensions", f"dimensions must be integers >= 3, got {d!r}")
    samples = _get(params, "samples", 10000, int)
    pairs = _get(params, "hls_pairs", 100, int)

    def progress(res):
        print(f"[verify] {res.name}: {'PASS' if res.passed else 'FAIL'} worst_margin={res.worst_margin:.3g}",
              file=sys.stderr)

    results = _verify.run_suite(checks, tuple(dims), samples, seed, pairs, progress)
    passed = all(r.passed for r in results)
    out.json("verdict.json", {"command": "verify", "seed": seed, "passed": passed,
                              "checks": [r.to_dict() for r in results]})
    return 0 if passed else 1


def _solve_config(params: dict, threads: int) -> SolveConfig:
    try:
        cfg = SolveConfig.from_dict(params)
    except ConfigError as exc:
        raise InputError(exc.key, str(exc).split(": ", 1)[-1]) from None
    except DomainError as exc:
        raise InputError("kernel", str(exc)) from None
    cfg.threads = threads
    return cfg


def cmd_solve(params: dict, out: Output, seed: int, threads: int) -> int:
    """Solve the integral equation and write nodal values plus a summary."""
    cfg = _solve_config(params, threads)
    res = solve_integral_equation(cfg)
    out.csv("solution.csv", res.to_csv())
    out.json("summary.json", {"command": "solve", "config": cfg.to_dict(), "result": res.summary()})
    return 0 if res.converged else 1


def _load_solution(path: Path, n: int) -> np.ndarray:
    rows = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    arr = np.array([r.split(",") for r in rows[1:]], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != n + 1:
        raise InputError("solution", f"{path} does not hold {n}-dimensional node values")
    return arr[:, -1]


def cmd_symmetry(params: dict, out: Output, seed: int, threads: int) -> int:
    """Sweep a solve output (``solve_dir``) or an inline ``solve`` config."""
    _check_keys(params, {"solve", "solve_dir", "t_points", "tolerance", "derivative_lambdas"})
    if ("solve" in params) == ("solve_dir" in params):
        raise InputError("solve", "give exactly one of 'solve' (inline config) or 'solve_dir'")
    if "solve" in params:
        if not isinstance(params["solve"], dict):
            raise InputError("solve", "expected an object")
        cfg = _solve_config(params["solve"], threads)
        res = solve_integral_equation(cfg)
        u = res.u
        solve_info = res.summary()
    else:
        d = Path(str(params["solve_dir"]))
        try:
            summ = json.loads((d / "summary.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError("solve_dir", f"cannot read summary.json: {exc}") from None
        conf = dict(summ.get("config", {}))
        if isinstance(conf.get("source"), str):
            raise InputError("solve_dir", "solve output used a callable source")
        cfg = _solve_config(conf, threads)
        u = _load_solution(d / "solution.csv", cfg.mesh.n)
        if u.size != cfg.mesh.size:
            raise InputError("solve_dir", "node count does not match the mesh")
        solve_info = summ.get("result", {})
    mesh = cfg.mesh
    field = MeshField(mesh, u, 0.0)
    tol = params.get("tolerance")
    if tol is not None:
        tol = _get(params, "tolerance", None, float)
    ts = default_t_grid(mesh, _get(params, "t_points", 61, int))
    rep = moving_plane_sweep(field, t_grid=ts, tol=tol, threads=threads)
    center = rep.center if rep.center is not None else mesh.center.coords
    lams = params.get("derivative_lambdas")
    if lams is None:
        R = mesh.euclidean_radius()
        lams = [R * j / 10.0 for j in range(1, 10)]
    elif not isinstance(lams, list):
        raise InputError("derivative_lambdas", "expected a list")
    rc = radial_profile_check(field, center, mesh, derivative_lambdas=lams if not np.any(mesh.center.coords) else None)
    rep.max_monotonicity_violation = rc.max_violation
    rep.directional_derivative_flags = rc.derivative_flags
    out.csv("deficits.csv", rep.to_csv())
    ok = rep.certified and rc.monotone and all(f["negative"] for f in rc.derivative_flags)
    out.json("symmetry.json", {"command": "symmetry", "passed": ok, "report": rep.to_dict(),
                               "radial_profile": rc.to_dict(), "solve": solve_info})
    return 0 if ok else 1


def cmd_heat(params: dict, out: Output, seed: int, threads: int) -> int:
    """Tabulate heat kernels on a distance grid for several times."""
    _check_keys(params, {"n", "t", "rho", "shifted"})
    n = _get(params, "n", 3, int)
    times = params.get("t", [0.1, 1.0])
    if not isinstance(times, list) or not times:
        raise InputError("t", "expected a non-empty list of times")
    times = [float(_get({"t": t}, "t", None, float)) for t in times]
    shifted = _get(params, "shifted", False, bool)
    rho = _rho_grid(params.get("rho", {}))
    try:
        cols = [heat_kernel_array(n, t, rho, shifted) for t in times]
    except DomainError as exc:
        raise InputError("t" if "t=" in str(exc) else "n", str(exc)) from None
    rows = ["rho," + ",".join(f"t={t!r}" for t in times)]
    for i, r in enumerate(rho):
        rows.append(",".join([repr(float(r))] + [repr(float(c[i])) for c in cols]))
    out.csv("heat.csv", "\n".join(rows) + "\n")
    out.json("heat.json", {"command": "heat", "n": n, "t": times, "shifted": shifted, "file": "heat.csv"})
    return 0


HANDLERS: Dict[str, Callable] = {
    "kernel-table": cmd_kernel_table,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "symmetry": cmd_symmetry,
    "heat": cmd_heat,
}


# ----------------------------------------------------------------------------
# entry point


def _read_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError("config", f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        # name the key whose value failed to parse, when there is one
        head = text[: exc.pos]
        keys = re.findall(r'"([^"\\]+)"\s*:', head)
        key = keys[-1] if keys else "config"
        raise InputError(key, f"JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError("config", "top level must be an object")
    return doc


def _run_flags(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    f = argparse.ArgumentParser(add_help=False)
    f.add_argument("--config", default=d, help="JSON run configuration (parameters or a RunConfig document)")
    f.add_argument("--out", default=d, help="output directory (default: ./out-<command>)")
    f.add_argument("--seed", type=int, default=d, help="seed for sampling-based checks")
    f.add_argument("--threads", type=int, default=d, help=f"worker threads (default ${THREADS_ENV} or 1)")
    return f


def build_parser() -> argparse.ArgumentParser:
    """``hypgreen [flags] <command> [flags]``; the command may come from a RunConfig instead."""
    p = argparse.ArgumentParser(prog="hypgreen", description=__doc__.splitlines()[0], parents=[_run_flags(False)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command")
    flags = _run_flags(True)
    for c in COMMANDS:
        doc = HANDLERS[c].__doc__
        sub.add_parser(c, parents=[flags], help=doc.splitlines()[0] if doc else c)
    return p


def resolve_run(args) -> tuple:
    """Merge the config document with CLI flags: (parameters, out_dir, seed, threads)."""
    doc = _read_config(args.config) if args.config else {}
    if args.command is None:
        args.command = doc.get("command")
        if args.command not in HANDLERS:
            raise InputError("command", f"expected one of {list(COMMANDS)}, got {args.command!r}")
    if "parameters" in doc:
        _check_keys(doc, {"command", "parameters", "output_dir", "seed"})
        if doc.get("command", args.command) != args.command:
            raise InputError("command", f"config is for {doc['command']!r}, not {args.command!r}")
        params = doc["parameters"]
        if not isinstance(params, dict):
            raise InputError("parameters", "expected an object")
    else:
        params, doc = doc, {}
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise InputError("seed", "expected an integer")
    out_dir = args.out or doc.get("output_dir") or f"out-{args.command}"
    threads = args.threads
    if threads is None:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(env)
        except ValueError:
            raise InputError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    if threads < 1:
        raise InputError("threads", "must be at least 1")
    return params, Path(out_dir), int(seed), threads


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None and args.config is None:
        parser.error("give a command or a --config naming one")
    try:
        params, out_dir, seed, threads = resolve_run(args)
        stamp = {"version": __version__,
                 "config_hash": config_hash({"command": args.command, "parameters": params, "seed": seed})}
        out = Output(out_dir, stamp)
        code = HANDLERS[args.command](params, out, seed, threads)
    except InputError as exc:
        print(json.dumps({"error": "invalid input", "key": exc.key, "message": exc.message}), file=sys.stderr)
        return 2
    except (ConfigError, DomainError, ValueError) as exc:
        key = getattr(exc, "key", "parameters")
        print(json.dumps({"error": "invalid input", "key": key, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "exit": code, "out": str(out_dir), "files": out.files,
                      "config_hash": stamp["config_hash"]}))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
