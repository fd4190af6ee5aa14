import json
import subprocess
import sys

import numpy as np
import pytest

from atomglasso.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_bounds_json(capsys):
    code, out = run(capsys, "bounds", "--family", "chain", "--p", "16",
                    "--norm", "l1")
    assert code == 0
    d = json.loads(out.out)
    assert d["delta"] == pytest.approx(1.9e-3, abs=1e-4)
    assert "lambda" in d


def test_bounds_condition_failure_exit_2(capsys):
    code, out = run(capsys, "bounds", "--family", "chain", "--p", "8",
                    "--ambient", "mahalanobis")
    assert code == 2
    d = json.loads(out.out)
    assert d["error"] == "irrepresentability"
    assert d["lhs"] >= d["tau"]


def test_bounds_slope_weights_file(capsys, tmp_path):
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"weights": [1.0, 0.5, 0.5, 0.25, 0.25, 0.0]}))
    code, out = run(capsys, "bounds", "--family", "chain", "--p", "4",
                    "--norm", "slope", "--weights", str(w))
    assert code in (0, 2)
    json.loads(out.out)


def test_table_text_and_empty(capsys):
    code, out = run(capsys, "table", "--which", "delta", "--p", "16",
                    "--families", "chain,hub", "--format", "text")
    assert code == 0
    assert "chain" in out.out and "hub" in out.out
    code, out = run(capsys, "table", "--which", "irrep", "--families", "")
    assert code == 0
    assert json.loads(out.out) == []


def test_solve_csv(capsys, tmp_path):
    S = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
    f = tmp_path / "s.csv"
    np.savetxt(f, S, delimiter=",")
    out_file = tmp_path / "r.json"
    code, _ = run(capsys, "solve", "--sigma", str(f), "--lambda", "0.05",
                  "--out", str(out_file))
    assert code == 0
    d = json.loads(out_file.read_text())
    assert d["converged"]
    assert np.array(d["K_hat"]).shape == (3, 3)


def test_solve_nonconvergence_exit_3(capsys, tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 6))
    f = tmp_path / "s.json"
    f.write_text(json.dumps((X.T @ X / 30).tolist()))
    code, out = run(capsys, "solve", "--sigma", str(f), "--lambda", "0.05",
                    "--max-iter", "1")
    assert code == 3
    assert json.loads(out.out)["converged"] is False


def test_solve_bad_input_exit_1(capsys, tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("1,2\n0,1\n")
    code, out = run(capsys, "solve", "--sigma", str(f), "--lambda", "0.1")
    assert code == 1
    assert "error" in out.err


def test_experiment_writes_csv(capsys, tmp_path):
    out_file = tmp_path / "scatter.csv"
    code, out = run(capsys, "experiment", "--family", "chain", "--p", "5",
                    "--draws", "4", "--scale", "2", "--seed", "1",
                    "--out", str(out_file))
    assert code == 0
    assert json.loads(out.out)["meta"]["n_draws"] == 4
    lines = out_file.read_text().splitlines()
    assert lines[0] == "deviation,error,recovered,seed"
    assert len(lines) == 5


def test_tune_weights(capsys):
    code, out = run(capsys, "tune-weights", "--m", "4", "--exact")
    assert code == 0
    d = json.loads(out.out)
    assert d["fractions"] == ["1", "5/7", "3/7", "1/7"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "atomglasso", "tune-weights",
                        "--m", "3", "--k", "1"], capture_output=True,
                       text=True, check=True)
    assert json.loads(r.stdout)["weights"] == [1.0, 1.0, 1.0]
