import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import fixture_path
from lqg_signaling.cli import (
    EXIT_INVALID, EXIT_IO, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_VERIFY_FAILED, main,
)


def run(tmp_path, *argv):
    code = main(list(argv) + ["--out", str(tmp_path)])
    return code


def report(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def spec(name):
    return str(fixture_path(name))


def test_solve_terminal_stage(tmp_path):
    assert run(tmp_path, "solve", "--spec", spec("example1.json"), "--horizon-override", "1") == EXIT_OK
    doc = report(tmp_path, "solve_report.json")
    assert doc["horizon"] == 1 and doc["converged"]
    for i in range(2):
        np.testing.assert_allclose(doc["path"]["stages"][0]["L"][i], [[-1.0, -1.0]], atol=1e-12)
    assert {"version", "spec_hash", "tolerances", "validation"} <= doc.keys()


def test_solve_long_horizon(tmp_path):
    assert run(tmp_path, "solve", "--spec", spec("example1.json")) == EXIT_OK
    doc = report(tmp_path, "solve_report.json")
    assert len(doc["path"]["stages"]) == 30
    np.testing.assert_allclose(doc["path"]["stages"][0]["L"][0], [[-1.062, -1.062]], atol=5e-3)


def test_malformed_and_missing_spec(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"horizon": 2, "n": [1, 1]}))
    assert main(["solve", "--spec", str(bad)]) == EXIT_INVALID
    assert main(["solve", "--spec", str(tmp_path / "nope.json")]) == EXIT_IO
    bad.write_text("{not json")
    assert main(["solve", "--spec", str(bad)]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_nonconvergence_keeps_partial_report(tmp_path):
    code = run(tmp_path, "solve", "--spec", spec("example1.json"), "--max-iter", "1")
    assert code == EXIT_NONCONVERGENCE
    doc = report(tmp_path, "solve_report.json")
    assert not doc["converged"] and doc["error"]["stage"] is not None
    assert "path" in doc


def test_solve_and_simulate_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "solve", "--spec", spec("scalar_t3.json")) == EXIT_OK
        assert run(d, "simulate", "--spec", spec("scalar_t3.json"), "--mc-n", "50", "--seed", "9") == EXIT_OK
    for name in ("solve_report.json", "simulate_report.json", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = (a / "trajectories.csv").read_text().splitlines()
    assert len(rows) == 1 + 50 * 4


def test_steady_state_seeds(tmp_path):
    assert run(tmp_path, "steady-state", "--spec", spec("example1.json")) == EXIT_OK
    doc = report(tmp_path, "steady_state_report.json")
    np.testing.assert_allclose(doc["steady_state"]["L"][0], [[-1.062, -1.062]], atol=5e-3)
    assert "heuristic" in doc["steady_state"]["note"]
    assert doc["existence"]["players"][0]["sufficient_condition"]
    assert run(tmp_path, "steady-state", "--spec", spec("example2.json"), "--init", "identity") == EXIT_OK
    doc = report(tmp_path, "steady_state_report.json")
    np.testing.assert_allclose(doc["steady_state"]["L"][0], -np.array([[1.680, 1.600], [0.191, 0.286]]), atol=5e-3)


def test_existence_command(tmp_path):
    assert run(tmp_path, "existence", "--spec", spec("example1.json"), "--survey", "8") == EXIT_OK
    doc = report(tmp_path, "existence_report.json")
    assert len(doc["survey"]) == 2 and len(doc["survey"][0]["lDl"]) == 8
    assert all(p["solution_exists_at_l"] for p in doc["existence"]["players"])
    assert run(tmp_path, "existence", "--spec", spec("example2.json")) == EXIT_INVALID


def test_verify_commands(tmp_path):
    base = ["verify", "--spec", spec("scalar_t3.json"), "--mc-n", "20000"]
    assert run(tmp_path, *base) == EXIT_OK
    good = report(tmp_path, "verify_report.json")
    assert good["passed"] and "linear-affine" in good["note"]
    code = run(tmp_path, *base, "--path", spec("scalar_t3_corrupted_path.json"))
    assert code == EXIT_VERIFY_FAILED
    bad = report(tmp_path, "verify_report.json")
    assert bad["deviations"]["n_failed"] >= 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "lqg_signaling", "solve", "--spec", spec("example1.json"),
                          "--horizon-override", "1"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["converged"]
