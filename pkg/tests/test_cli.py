import json
import math
import subprocess
import sys

import pytest

from bimono import cli

FAST_SIM = ["--set", "initial.epsilon=0.05", "--set", "run.n_cycles=3"]


def test_presets_listed(capsys):
    assert cli.main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert {"section3", "paper-phase1", "dirac", "steady", "phase3-linear"} <= set(names)


def test_simulate_csv_outputs(tmp_path):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--out", str(out), *FAST_SIM]) == 0
    assert {p.name for p in out.iterdir()} >= {"cycles.csv", "trajectory.csv", "phases.json"}
    lines = (out / "cycles.csv").read_text().splitlines()
    assert len(lines) == 4
    summary = json.loads((out / "phases.json").read_text())
    assert summary["conservation_ok"] is True
    assert summary["phases"]["labels"][0] == "I"


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--out", str(tmp_path / name), *FAST_SIM]) == 0
    for f in ("cycles.csv", "trajectory.csv", "phases.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_steady_preset_has_no_cycles(tmp_path):
    out = tmp_path / "steady"
    assert cli.main(["simulate", "--preset", "steady", "--set", "run.t_end=500", "--out", str(out)]) == 0
    assert (out / "cycles.csv").read_text().splitlines()[1:] == []


def test_json_format(tmp_path):
    out = tmp_path / "j"
    assert cli.main(["simulate", "--format", "json", "--out", str(out), *FAST_SIM]) == 0
    data = json.loads((out / "simulate.json").read_text())
    assert len(data["cycles"]) == 3
    assert set(data["trajectory"]) == {"t", "v", "w", "E", "c1", "L", "m"}


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["blayer", "--format", "json"]) == 0
    data = json.loads((tmp_path / "env" / "blayer.json").read_text())
    assert abs(data["U_at_xi_max"] - 2 / math.pi) < 1e-6
    assert data["far_field_error"] < 1e-6


@pytest.mark.parametrize("argv", [
    ["simulate", "--set", "run.bogus=1"],
    ["simulate", "--set", "initial.epsilon=0.9"],
    ["simulate", "--preset", "nonexistent"],
    ["simulate", "--set", "initial.preset=nope"],
    ["blayer", "--set", "x_max=3"],
    ["lv", "--set", "E=[1.0, -2.0]"],
    ["semigroup", "--set", "start=triangle"],
    ["simulate", "--set", "noequals"],
    ["simulate", "--bad-flag"],
])
def test_bad_configuration_exits_2_without_output(tmp_path, argv, capsys):
    out = tmp_path / "never"
    assert cli.main([*argv, "--out", str(out)]) == 2
    assert not out.exists()


def test_config_file_and_preset_are_exclusive(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"x_max": 12.0}))
    assert cli.main(["blayer", "--config", str(cfg), "--preset", "section3", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["blayer", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_invariant_breach_exits_1_with_diagnostics(tmp_path):
    out = tmp_path / "loose"
    code = cli.main(["simulate", "--out", str(out), *FAST_SIM,
                     "--set", "run.rel_tol=1e-6", "--set", "run.abs_tol=1e-8"])
    assert code == 1
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["max_mass_error"] > 1e-8


def test_stability_reports_damped_mode(tmp_path):
    out = tmp_path / "st"
    assert cli.main(["stability", "--format", "json", "--out", str(out)]) == 0
    data = json.loads((out / "stability.json").read_text())
    assert data["re_lambda1"] < 0
    assert data["band_min"] >= -4 and data["band_max"] <= 0


def test_phase3_spectral(tmp_path):
    out = tmp_path / "p3"
    assert cli.main(["phase3", "--spectral", "--format", "json", "--set", "n_cycles=3", "--out", str(out)]) == 0
    data = json.loads((out / "phase3.json").read_text())
    assert abs(data["spectral"]["r_minus_abs"] - 0.480533816) < 1e-8
    assert data["predicted_log_slope"] == pytest.approx(-data["spectral"]["a"] * 0.01)


def test_small_commands_run(tmp_path):
    assert cli.main(["lv", "--set", "E=[1.0, 0.5]", "--out", str(tmp_path / "lv")]) == 0
    assert len((tmp_path / "lv" / "lv_cycles.csv").read_text().splitlines()) == 3
    assert cli.main(["phase4", "--set", "tau_end=1.0", "--out", str(tmp_path / "p4")]) == 0
    assert cli.main(["semigroup", "--set", "n_iter=3", "--set", "sigma2=0.01", "--out", str(tmp_path / "sg")]) == 0
    assert cli.main(["pde", "--set", "t_end=50", "--format", "json", "--out", str(tmp_path / "pde")]) == 0
    data = json.loads((tmp_path / "pde" / "pde.json").read_text())
    assert data["diagnostics"]["max_conservation_error"] < 1e-13


def test_sweep(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"sweep_command": "lv", "base": {"epsilon": [0.05]},
                               "vary": {"E": [[1.0], [0.5]]}, "workers": 1}))
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "sweep.json").read_text())
    assert [r["exit"] for r in summary["runs"]] == [0, 0]
    assert (out / "run-001" / "lv_cycles.csv").exists()
    cfg.write_text(json.dumps({"sweep_command": "lv", "vary": {"E": [[1.0]], "epsilon": [[0.1], [0.2]]}}))
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "bad")]) == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bimono.cli", "presets"], capture_output=True, text=True)
    assert proc.returncode == 0 and "section3" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "bimono.cli", "simulate", "--set", "run.zzz=1",
                           "--out", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 2 and "zzz" in proc.stderr
