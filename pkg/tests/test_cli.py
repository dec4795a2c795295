import csv
import json
import subprocess
import sys

import pytest

from lipinv.cli import main, shipped_configs

EXPECTED = {
    "volterra_sin": {"certify": 0, "solve": 0, "invert-scan": 0, "validate-pj": 0},
    "volterra_clip": {"certify": 0, "solve": 0, "invert-scan": 0, "validate-pj": 0},
    "volterra_log_shift": {"certify": 0, "solve": 0, "invert-scan": 0, "validate-pj": 0},
    "volterra_zero": {"certify": 0, "solve": 0, "invert-scan": 0, "validate-pj": 0},
    "volterra_corrupted": {"invert-scan": 7, "volterra-demo": 7},
    "linear": {"certify": 0, "solve": 0, "validate-pj": 0, "invert-scan": 1},
    "arctan": {"certify": 2, "solve": 5},
    "cube": {"certify": 3, "solve": 0},
    "abs_ball": {"certify": 3, "validate-pj": 0},
    "abs_wrong": {"validate-pj": 8},
    "profile_power2": {"certify": 3, "solve": 1},
}


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path), "--quiet"])


def test_every_shipped_config_is_covered():
    assert sorted(EXPECTED) == shipped_configs()


@pytest.mark.parametrize("config,command,code",
                         [(c, k, v) for c, cmds in EXPECTED.items() for k, v in cmds.items()])
def test_exit_codes(tmp_path, config, command, code):
    assert run(tmp_path, command, "--config", config) == code


def test_volterra_demo_outputs(tmp_path):
    assert run(tmp_path, "volterra-demo", "--config", "volterra_sin") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["exit_codes"] == {"certify": 0, "solve": 0, "invert-scan": 0, "validate-pj": 0}
    rep = json.loads((tmp_path / "solve" / "solve_report.json").read_text())
    assert rep["status"] == "solved" and rep["oracle_distance"] < 1e-7
    assert len(rep["uniqueness"]["clusters"]) == 1
    cert = json.loads((tmp_path / "certify" / "certificate.json").read_text())
    assert cert["verdict"] == "divergent_certified" and cert["phi_check"]["lipschitz_ok"]
    rows = list(csv.reader((tmp_path / "invert-scan" / "invert_scan.csv").open()))
    assert rows[0] == ["pair", "ratio", "bound", "x_norm", "ok"] and all(r[-1] == "1" for r in rows[1:])
    assert (tmp_path / "solve" / "solution.csv").exists()


def test_target_override_and_tolerance(tmp_path):
    assert run(tmp_path, "solve", "--config", "linear", "--target", "[2.0, 3.0]", "--tol", "1e-10") == 0
    rep = json.loads((tmp_path / "solve_report.json").read_text())
    assert rep["residual_trace"][-1] <= 1e-10
    assert rep["x_final"] == pytest.approx([0.5, 1.0], abs=1e-9)


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "volterra-demo", "--config", "volterra_log_shift", "--seed", "7") == 0
    for name in ("summary.json", "certify/certificate.json", "solve/solve_report.json",
                 "invert-scan/invert_scan.json", "invert-scan/invert_scan.csv", "validate-pj/validate_pj.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_load_errors(tmp_path, capsys):
    assert run(tmp_path, "certify", "--config", str(tmp_path / "missing.json")) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "certify", "--config", str(bad)) == 1
    assert "cannot load problem" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["certify"])
    assert exc.value.code == 2


def test_help_documents_commands_configs_and_codes():
    out = subprocess.run([sys.executable, "-m", "lipinv", "--help"], capture_output=True, text=True, check=True).stdout
    for word in ("certify", "solve", "invert-scan", "volterra-demo", "validate-pj", "--seed", "--starts",
                 "exit codes", "volterra_sin", "corrupt_bound_factor"):
        assert word in out
    for code in range(10):
        assert f"\n  {code}  " in out
