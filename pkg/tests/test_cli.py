import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import hypgreen
from hypgreen import cli

BOGGIO_SOLVE = {
    "kernel": {"type": "BoggioBall", "n": 3, "k": 1, "R": 0.6},
    "mesh": {"n_radial": 8, "n_theta": 6},
    "nonlinearity": {"type": "Affine", "a": 0.1, "b": 1.0},
    "initial": {"type": "bump", "center": [0.2, 0.1, 0.0], "height": 1.0, "width": 0.3},
    "tolerance": 1e-12,
}


def run(tmp_path, args, params=None, name="cfg.json", env=None):
    cmd = [sys.executable, "-m", "hypgreen.cli", *args]
    if params is not None:
        path = tmp_path / name
        path.write_text(params if isinstance(params, str) else json.dumps(params))
        cmd += ["--config", str(path)]
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run(cmd, capture_output=True, text=True, env=e, timeout=300)


def data_rows(path: Path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return lines[0], np.array([ln.split(",") for ln in lines[1:]], dtype=float)


def check_stamp(out: Path):
    files = sorted(out.iterdir())
    assert files
    for f in files:
        text = f.read_text()
        if f.suffix == ".json":
            doc = json.loads(text)
            assert doc["artifact_version"] == hypgreen.__version__ and len(doc["config_hash"]) == 16
        else:
            assert text.startswith(f"# artifact_version={hypgreen.__version__} config_hash=")


class TestKernelTable:
    def test_resolvent_closed_form(self, tmp_path):
        params = {"kernel": {"type": "Fractional", "n": 3, "alpha": 2.0},
                  "rho": {"min": 0.01, "max": 5.0, "points": 100, "spacing": "log"}}
        p = run(tmp_path, ["kernel-table", "--out", str(tmp_path / "o")], params)
        assert p.returncode == 0, p.stderr
        head, arr = data_rows(tmp_path / "o" / "kernel_00.csv")
        assert head == "rho,value,rel_err" and arr.shape == (100, 3)
        np.testing.assert_allclose(arr[:, 0], np.geomspace(0.01, 5.0, 100), rtol=1e-15)
        np.testing.assert_allclose(arr[:, 1], 1 / (4 * math.pi * np.sinh(arr[:, 0])), rtol=1e-6)
        check_stamp(tmp_path / "o")

    def test_several_kernels(self, tmp_path):
        params = {"kernels": [{"type": "Fractional", "n": 3, "alpha": 1.0}, {"type": "Shifted", "n": 4, "alpha": 2.0, "zeta": 0.5}],
                  "rho": {"min": 0.1, "max": 2.0, "points": 7}}
        p = run(tmp_path, ["kernel-table", "--out", str(tmp_path / "o")], params)
        assert p.returncode == 0, p.stderr
        idx = json.loads((tmp_path / "o" / "kernel_table.json").read_text())
        assert [t["file"] for t in idx["tables"]] == ["kernel_00.csv", "kernel_01.csv"]


class TestInputErrors:
    def test_malformed_json_names_key(self, tmp_path):
        p = run(tmp_path, ["verify", "--out", str(tmp_path / "o")], '{"checks": ["resolvent_h3"], "dimensions": [3, 4,, 5]}')
        assert p.returncode == 2
        err = json.loads(p.stderr.strip().splitlines()[-1])
        assert err["key"] == "dimensions" and "parse" in err["message"]

    @pytest.mark.parametrize("command,params,key", [
        ("verify", {"dimensions": [2]}, "dimensions"),
        ("verify", {"checks": ["nope"]}, "checks"),
        ("verify", {"speed": 1}, "speed"),
        ("solve", {**BOGGIO_SOLVE, "damping": 2.0}, "damping"),
        ("solve", {k: v for k, v in BOGGIO_SOLVE.items() if k != "kernel"}, "kernel"),
        ("heat", {"n": 3, "t": [-1.0]}, "t"),
        ("symmetry", {"solve_dir": "/nonexistent"}, "solve_dir"),
    ])
    def test_invalid_parameters(self, tmp_path, command, params, key):
        p = run(tmp_path, [command, "--out", str(tmp_path / "o")], params)
        assert p.returncode == 2, p.stdout
        assert json.loads(p.stderr.strip().splitlines()[-1])["key"] == key

    def test_bad_thread_env(self, tmp_path):
        p = run(tmp_path, ["heat", "--out", str(tmp_path / "o")], {"n": 3, "t": [1.0]}, env={cli.THREADS_ENV: "many"})
        assert p.returncode == 2

    def test_no_command(self, tmp_path):
        assert run(tmp_path, []).returncode == 2

    def test_run_config_with_wrong_command(self, tmp_path):
        p = run(tmp_path, [], {"command": "plot", "parameters": {}})
        assert p.returncode == 2


class TestCommands:
    def test_verify_defaults_pass(self, tmp_path):
        p = run(tmp_path, ["verify", "--out", str(tmp_path / "o")])
        assert p.returncode == 0, p.stderr
        doc = json.loads((tmp_path / "o" / "verdict.json").read_text())
        assert doc["passed"] and [c["name"] for c in doc["checks"]] == list(hypgreen.verify.CHECKS)
        assert all("worst_margin" in c for c in doc["checks"])

    def test_solve_then_symmetry(self, tmp_path):
        p = run(tmp_path, ["solve", "--out", str(tmp_path / "s")], BOGGIO_SOLVE)
        assert p.returncode == 0, p.stderr
        summary = json.loads((tmp_path / "s" / "summary.json").read_text())
        assert summary["result"]["converged"]
        head, arr = data_rows(tmp_path / "s" / "solution.csv")
        assert head == "x1,x2,x3,u" and arr.shape == (8 * 6 * 12, 4)
        q = run(tmp_path, ["symmetry", "--out", str(tmp_path / "y")], {"solve_dir": str(tmp_path / "s")}, name="sym.json")
        assert q.returncode == 0, q.stderr
        rep = json.loads((tmp_path / "y" / "symmetry.json").read_text())
        assert rep["passed"] and rep["report"]["certified"]
        assert np.linalg.norm(rep["report"]["center"]) <= 1e-8
        assert (tmp_path / "y" / "deficits.csv").read_text().splitlines()[1] == "direction,t,deficit"
        check_stamp(tmp_path / "s")
        check_stamp(tmp_path / "y")

    def test_nonconvergence_exit_1(self, tmp_path):
        params = {**BOGGIO_SOLVE, "nonlinearity": {"type": "Power", "p": 2.0, "amplitude": 300.0},
                  "initial": {"type": "constant", "value": 1.0}}
        p = run(tmp_path, ["solve", "--out", str(tmp_path / "s")], params)
        assert p.returncode == 1
        summary = json.loads((tmp_path / "s" / "summary.json").read_text())
        assert not summary["result"]["converged"] and summary["result"]["diagnostic"].startswith("diverged")

    def test_heat_table(self, tmp_path):
        params = {"n": 3, "t": [0.5, 1.0], "rho": {"min": 0.5, "max": 2.0, "points": 4, "spacing": "linear"}}
        p = run(tmp_path, ["heat", "--out", str(tmp_path / "h")], params)
        assert p.returncode == 0, p.stderr
        head, arr = data_rows(tmp_path / "h" / "heat.csv")
        assert head == "rho,t=0.5,t=1.0"
        r, t = arr[:, 0], 1.0
        want = (4 * math.pi * t) ** -1.5 * r / np.sinh(r) * np.exp(-t - r * r / (4 * t))
        np.testing.assert_allclose(arr[:, 2], want, rtol=1e-12)

    def test_run_config_document(self, tmp_path):
        doc = {"command": "heat", "parameters": {"n": 3, "t": [1.0]}, "output_dir": str(tmp_path / "h"), "seed": 3}
        p = run(tmp_path, [], doc)
        assert p.returncode == 0, p.stderr
        assert json.loads(p.stdout)["command"] == "heat"
        assert (tmp_path / "h" / "heat.csv").exists()


class TestDeterminism:
    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        outs = []
        for i, threads in enumerate(("1", "1", "3")):
            o = tmp_path / f"o{i}"
            p = run(tmp_path, ["symmetry", "--out", str(o), "--threads", threads, "--seed", "7"], {"solve": BOGGIO_SOLVE})
            assert p.returncode == 0, p.stderr
            outs.append({f.name: f.read_bytes() for f in sorted(o.iterdir())})
        assert outs[0] == outs[1] == outs[2]

    def test_seed_changes_hash(self, tmp_path):
        hashes = []
        for seed in ("1", "2"):
            p = run(tmp_path, ["verify", "--out", str(tmp_path / seed), "--seed", seed], {"checks": ["H_partial_signs"], "samples": 200})
            assert p.returncode == 0, p.stderr
            hashes.append(json.loads(p.stdout)["config_hash"])
        assert hashes[0] != hashes[1]

    def test_in_process_matches_subprocess(self, tmp_path, capsys):
        params = {"n": 3, "t": [1.0], "rho": {"min": 0.5, "max": 1.0, "points": 3}}
        (tmp_path / "c.json").write_text(json.dumps(params))
        assert cli.main(["heat", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "a")]) == 0
        p = run(tmp_path, ["heat", "--out", str(tmp_path / "b")], params, name="c.json")
        assert p.returncode == 0
        assert (tmp_path / "a" / "heat.csv").read_bytes() == (tmp_path / "b" / "heat.csv").read_bytes()
