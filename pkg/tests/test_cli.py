import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from krsolve.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_solve_twisted_writes_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-twisted", "--beta", "0.5", "--c", "0.3", "--n", "256",
                       "--t-schedule", "0.5,1.0", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["completed"] and summary["residual_sup"] < 1e-9
    for name in ("trace.csv", "final_profile.json", "final_potential.csv", "summary.json"):
        assert (tmp_path / name).exists()
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "t,residual_sup,I_tilde,J_tilde,mu_tilde,F_tilde,F_hat,lambda1,osc_phi,x_phi_sup"


def test_energies_roundtrip(tmp_path, capsys):
    run(capsys, "solve-twisted", "--beta", "0.5", "--c", "0.3", "--n", "256", "--t-schedule", "1.0",
        "--out", str(tmp_path / "a"))
    code, out, _ = run(capsys, "energies", "--beta", "0.5", "--c", "0.3",
                       "--potential", str(tmp_path / "a" / "final_potential.csv"), "--out", str(tmp_path / "b"))
    assert code == 0
    e = json.loads(out)
    assert e["I_tilde"] >= e["J_tilde"] >= 0


def test_conical_and_oracle(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-conical", "--nu", "0.5", "--divisor", "0", "--twist", "conical",
                       "--n", "512", "--epsilons", "1,0.3,0.1,0.03,0.01", "--out", str(tmp_path / "c"))
    assert code == 0
    cs = json.loads(out)
    code, out, _ = run(capsys, "oracle", "--nu", "0.5", "--out", str(tmp_path / "o"))
    orc = json.loads(out)
    assert abs(orc["c"] - cs["c"]) < 0.05
    assert abs(orc["beta"] - 0.75) < 1e-12


def test_cone_window_and_spectral(tmp_path, capsys):
    code, out, _ = run(capsys, "cone-window", "--lambda", "0.5", "--c-tilde", "0.4", "--alpha0", "1",
                       "--alphaD", "2", "--out", str(tmp_path / "w"))
    assert code == 0
    w = json.loads(out)
    assert not w["empty"] and abs(w["window"]["beta_min"] - 0.5 / 0.6) < 1e-12
    code, out, _ = run(capsys, "spectral", "--n", "512", "--out", str(tmp_path / "s"))
    sp = json.loads(out)
    assert abs(sp["lambda1"] - 1.0) < 1e-3 and abs(sp["a_omega"] - 2.8884) < 1e-3


def test_mt_check(tmp_path, capsys):
    code, out, _ = run(capsys, "mt-check", "--beta", "0.5", "--n", "256", "--family-size", "20",
                       "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["mt"]["C1"] > 0


@pytest.mark.parametrize("argv", [
    ["solve-twisted", "--beta", "1.5"],
    ["solve-twisted", "--t-schedule", ""],
    ["solve-twisted", "--t-schedule", "0.5,0.2"],
    ["energies"],
    ["solve-conical", "--nu", "0"],
    ["cone-window", "--lambda", "0.5"],
    ["solve-twisted", "--divisor", "1"],
    ["solve-twisted", "--jobs", "0"],
])
def test_config_errors_exit_2(tmp_path, capsys, argv):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 2
    e = json.loads(err)
    assert e["exit_code"] == 2 and e["error"] == "ConfigError" and e["message"]


def test_scenario_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {beta: 0.5, colour: red}\n")
    assert run(capsys, "solve-twisted", "--scenario", str(bad))[0] == 2
    bad.write_text("model: [1, 2\n")
    assert run(capsys, "solve-twisted", "--scenario", str(bad))[0] == 2
    assert run(capsys, "solve-twisted", "--scenario", str(tmp_path / "missing.yaml"))[0] == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "solve-twisted", "--beta", "0.5", "--c", "0.3", "--n", "256",
                       "--max-iters", "1", "--t-schedule", "1.0", "--out", str(tmp_path))
    assert code == 3
    assert json.loads(err)["exit_code"] == 3


def test_sabotaged_verification_exits_4(tmp_path, capsys):
    # a loose Newton tolerance leaves the path identities visibly violated
    code, out, err = run(capsys, "verify", "--only", "4", "--residual-tol", "1", "--out", str(tmp_path))
    assert code == 4
    assert "[FAIL]  4" in out
    assert json.loads(err)["error"] == "VerificationFailure"


def test_parallel_batch_is_deterministic(tmp_path):
    sweep = tmp_path / "sweep.yaml"
    sweep.write_text(
        "defaults: {grid: {n: 256}, schedules: {t: [0.5, 1.0]}}\n"
        "scenarios:\n"
        "  - {name: a, model: {beta: 0.5, c: 0.3}}\n"
        "  - {name: b, model: {beta: 0.6, c: 0.5}}\n"
        "  - {name: c, model: {beta: 0.5, f_eta: {shape: density}}}\n")
    outs = []
    for jobs in ("1", "3"):
        out = tmp_path / f"out{jobs}"
        r = subprocess.run([sys.executable, "-m", "krsolve", "solve-twisted", "--scenario", str(sweep),
                            "--out", str(out), "--jobs", jobs], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append(out)
    for cell in ("a", "b", "c"):
        for name in ("trace.csv", "summary.json", "final_profile.json"):
            assert (outs[0] / cell / name).read_bytes() == (outs[1] / cell / name).read_bytes()


def test_shipped_scenarios_load():
    from krsolve.scenario import load_scenarios
    names = []
    for p in sorted((ROOT / "scenarios").glob("*.yaml")):
        names += [sc.name for sc in load_scenarios(p)]
    assert "teardrop-nu05" in names and len(names) >= 8
