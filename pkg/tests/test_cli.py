"""Tests for the bellbounds command-line interface."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bellbounds import bounds as B
from bellbounds import cli, npa
from bellbounds.oracle import THREADS_ENV

SQ2 = math.sqrt(2)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_chsh(capsys):
    code, out, _ = run(capsys, "bounds", "--inequality", "chsh", "--omega", "0,0")
    assert code == cli.EXIT_OK
    data = json.loads(out)
    assert data["U"] == pytest.approx(2 * SQ2, abs=1e-12)
    assert data["class_11"] == pytest.approx(SQ2, abs=1e-12)


def test_bounds_mermin(capsys):
    code, out, _ = run(capsys, "bounds", "--inequality", "mermin3", "--omega", "0,0,1")
    data = json.loads(out)
    assert code == 0
    assert data["U"] == pytest.approx(2 * SQ2)
    assert data["class_21"] == pytest.approx(2 * SQ2)


def test_bounds_bad_cosine(capsys):
    code, _, err = run(capsys, "bounds", "--inequality", "chsh", "--omega", "2,0")
    assert code == cli.EXIT_INPUT
    assert "outside" in err
    assert run(capsys, "bounds", "--inequality", "chsh", "--omega", "0,x")[0] == cli.EXIT_INPUT
    assert run(capsys, "bounds", "--inequality", "chsh", "--omega", "0,0,0")[0] == cli.EXIT_INPUT


def test_bounds_mk_and_observables(capsys, tmp_path):
    code, out, _ = run(capsys, "bounds", "--inequality", "mk", "--n", "4", "--omega", "0,0,0,0")
    assert code == 0
    assert json.loads(out)["U"] == pytest.approx(B.quantum_bound(B.BellExpression.mk(4), (0, 0, 0, 0)))
    obs = [[{"r": 1, "axis": [0, 0, 1]}, {"r": 1, "axis": [1, 0, 0]}]] * 2
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(obs))
    code, out, _ = run(capsys, "bounds", "--inequality", "chsh", "--observables", str(path), "--class", "11")
    assert code == 0
    assert json.loads(out)["bound"] == pytest.approx(SQ2, abs=1e-6)


def test_mutually_exclusive_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bounds", "--inequality", "chsh", "--omega", "0,0", "--observables", "x.json"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        cli.main(["structure", "--inequality", "chsh", "--grid", "5", "--v", "2.1"])


def test_certify_examples(capsys):
    code, out, _ = run(capsys, "certify", "--inequality", "chsh", "--beta-cal", "2.8284271", "--beta-obs", "1.5")
    assert code == 0 and json.loads(out)["verdict"] == B.ENTANGLED
    code, out, _ = run(
        capsys, "certify", "--inequality", "mermin3", "--class", "21", "--beta-cal", "4", "--beta-obs", "2.1"
    )
    assert code == 0 and json.loads(out)["verdict"] == B.GENUINE_TRIPARTITE_ENTANGLED
    code, out, _ = run(capsys, "certify", "--inequality", "chsh", "--beta-cal", "2.5", "--beta-obs", "1.0")
    assert code == 0 and json.loads(out)["verdict"] == B.NOT_CERTIFIED
    code, _, err = run(capsys, "certify", "--inequality", "chsh", "--beta-cal", "3.0", "--beta-obs", "1.0")
    assert code == cli.EXIT_NONQUANTUM and "quantum maximum" in err
    assert run(capsys, "certify", "--inequality", "chsh", "--beta-cal", "2.5")[0] == cli.EXIT_INPUT


def test_structure_chsh_endpoints(capsys):
    code, out, _ = run(capsys, "structure", "--inequality", "chsh", "--class", "11", "--grid", "41")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "v,f,omega_1,omega_2,residual"
    rows = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    assert len(rows) == 41
    np.testing.assert_allclose(rows[0, :2], [2, 2], atol=1e-9)
    np.testing.assert_allclose(rows[-1, :2], [2 * SQ2, SQ2], atol=1e-4)


def test_structure_mermin21_output_file(capsys, tmp_path):
    path = tmp_path / "m21.csv"
    code, out, _ = run(
        capsys, "structure", "--inequality", "mermin3", "--class", "21", "--grid", "41", "--output", str(path)
    )
    assert code == 0
    meta = json.loads(out)
    assert meta["audit"]["passed"]
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 1], [B.f21_closed(v) for v in rows[:, 0]], atol=1e-4)
    assert path.with_suffix(".json").exists()


def test_structure_audit_failure_exit(capsys, monkeypatch):
    """A table that fails the audit is still written and exits 4."""

    class Failed:
        passed = False

    monkeypatch.setattr(cli, "audit_shape", lambda table: Failed())
    code, out, _ = run(capsys, "structure", "--inequality", "chsh", "--class", "11", "--grid", "9")
    assert code == cli.EXIT_AUDIT
    assert out.startswith("v,f,")


def test_structure_grid_too_coarse(capsys):
    code, _, err = run(
        capsys, "structure", "--inequality", "chsh", "--class", "11", "--grid", "9", "--resolution", "5", "--band", "1e-4"
    )
    assert code == cli.EXIT_GRID
    assert err.startswith("error:")


def test_structure_json_format(capsys):
    code, out, _ = run(capsys, "structure", "--inequality", "chsh", "--grid", "9", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert len(data["rows"]) == 9
    assert data["rows"][1]["f"] == pytest.approx(B.chsh_structure_f(data["rows"][1]["v"]), abs=1e-4)
    # fewer rows than the audit needs is an input error
    assert run(capsys, "structure", "--inequality", "chsh", "--v", "2.2,2.6")[0] == cli.EXIT_INPUT


def test_certify_with_table(capsys, tmp_path):
    path = tmp_path / "m111.csv"
    code, _, _ = run(
        capsys, "structure", "--inequality", "mermin3", "--class", "111", "--grid", "11", "--resolution", "61",
        "--output", str(path),
    )
    assert code == 0
    code, out, _ = run(
        capsys, "certify", "--inequality", "mermin3", "--class", "111", "--beta-cal", "4", "--beta-obs", "1.2",
        "--table", str(path),
    )
    assert code == 0
    assert json.loads(out)["verdict"] == B.NOT_FULLY_SEPARABLE


def test_oracle_examples(capsys):
    code, out, _ = run(capsys, "oracle", "--inequality", "chsh", "--class", "11", "--trials", "50", "--seed", "1")
    assert code == 0
    assert json.loads(out)["passed"]
    code, again, _ = run(capsys, "oracle", "--inequality", "chsh", "--class", "11", "--trials", "50", "--seed", "1")
    assert again == out
    code, _, err = run(capsys, "oracle", "--inequality", "chsh", "--trials", "5")
    assert code == cli.EXIT_INPUT and "seed" in err


def test_oracle_violation_exit(capsys, monkeypatch):
    real = B.class_bound
    monkeypatch.setattr(B, "class_bound", lambda expr, cls, s: 0.9 * real(expr, cls, s))
    code, out, _ = run(capsys, "oracle", "--inequality", "chsh", "--trials", "3", "--seed", "0", "--restarts", "8")
    assert code == cli.EXIT_ORACLE
    assert not json.loads(out)["passed"]


def test_oracle_thread_count_invariant(capsys, monkeypatch):
    argv = ("oracle", "--inequality", "mermin3", "--class", "111", "--trials", "16", "--seed", "4", "--restarts", "8")
    monkeypatch.setenv(THREADS_ENV, "1")
    one = run(capsys, *argv)[1]
    monkeypatch.setenv(THREADS_ENV, "4")
    four = run(capsys, *argv)[1]
    assert one == four


def test_npa_certify(capsys, tmp_path):
    corr = tmp_path / "corr.json"
    corr.write_text(json.dumps(npa.lambda_family(0.6).to_dict()))
    alice = tmp_path / "alice.json"
    alice.write_text(json.dumps(npa.KnownSide.orthogonal().to_dict()))
    code, out, _ = run(capsys, "npa", "certify", "--corr", str(corr), "--alice", str(alice))
    assert code == 0
    data = json.loads(out)
    assert data["verdict"] == npa.ENTANGLED
    assert data["chsh"] == pytest.approx(2.4)
    code, out, _ = run(capsys, "npa", "certify", "--corr", str(corr), "--alice", "none")
    assert json.loads(out)["verdict"] in (npa.ENTANGLED, npa.NOT_CERTIFIED)
    assert run(capsys, "npa", "certify", "--corr", str(corr), "--alice", "nowhere.json")[0] == cli.EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "npa", "certify", "--corr", str(bad), "--alice", "orthogonal")[0] == cli.EXIT_INPUT


def test_npa_scan_level1(capsys):
    code, out, _ = run(capsys, "npa", "scan", "--family", "lambda", "--alice", "orthogonal", "--level", "1", "--tol", "1e-2")
    assert code == 0
    data = json.loads(out)
    assert data["status"] == npa.THRESHOLD
    assert data["bracket"][1] - data["bracket"][0] <= 1e-2
    assert data["operator_set"]["alice"] == ["1", "A0", "A1"]


def test_npa_scan_bad_tol(capsys):
    assert run(capsys, "npa", "scan", "--tol", "1e-6")[0] == cli.EXIT_INPUT


def test_config_merge(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"inequality": "chsh", "omega": "1,0"}))
    code, out, _ = run(capsys, "--config", str(cfg), "bounds")
    assert code == 0
    assert json.loads(out)["U"] == pytest.approx(2.0)
    # explicit flags win over the file
    code, out, _ = run(capsys, "bounds", "--config", str(cfg), "--omega", "0,0")
    assert json.loads(out)["U"] == pytest.approx(2 * SQ2)
    cfg.write_text("[1, 2]")
    assert run(capsys, "bounds", "--config", str(cfg))[0] == cli.EXIT_INPUT


def test_output_flag(capsys, tmp_path):
    path = tmp_path / "out.json"
    code, out, _ = run(capsys, "--output", str(path), "bounds", "--inequality", "chsh", "--omega", "0,0")
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["U"] == pytest.approx(2 * SQ2)


def test_module_entry_point_deterministic(tmp_path):
    argv = [sys.executable, "-m", "bellbounds", "oracle", "--inequality", "chsh", "--trials", "20", "--seed", "7"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True, env={THREADS_ENV: "3", "PATH": ""}).stdout
    assert a == b and a
