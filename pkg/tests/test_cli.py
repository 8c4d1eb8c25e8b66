import csv
import json
import math

import numpy as np
import pytest

from qutrit_pareto.cli import EXIT_CONFIG, EXIT_OK, MANIFEST, main
from qutrit_pareto.config import ConfigError, resolve
from qutrit_pareto.pareto import load_run

from conftest import DATA

SECH3_50 = {
    "model": "SECH3",
    "T_ns": 50,
    "omega0_GHz": 0.1,
    "n": 0.995,
    "epsilon": 2.0,
    "k_GHz": [-0.161],
    "gamma": [1.92],
}


def _config(tmp_path, name="cfg.json", **values):
    path = tmp_path / name
    path.write_text(json.dumps(values))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- simulate -----------------------------------------------------------------


def test_simulate_reference_pulse_profile(tmp_path):
    out = tmp_path / "sim"
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(out))
    assert main(["simulate", "--config", cfg, "--n_points", "401"]) == EXIT_OK
    rows = _rows(out / "pulse_profile.csv")
    assert rows[0] == ["t_ns", "omega_GHz", "detuning_GHz"]
    t, om, det = np.array(rows[1:], dtype=float).T
    assert t.size == 401 and t[0] == pytest.approx(-25.0) and t[-1] == pytest.approx(25.0)
    # sech envelope peaks at the centre; tanh chirp is odd and monotone
    assert om[200] == pytest.approx(0.1, rel=1e-12)
    np.testing.assert_allclose(om, om[::-1], atol=1e-15)
    np.testing.assert_allclose(det, -det[::-1], atol=1e-15)
    assert np.all(np.diff(det) < 0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["p_e_final"] > 0.99
    assert summary["max_pf"] == pytest.approx(0.04415, abs=2e-5)
    assert _rows(out / "trajectory.csv")[0][:2] == ["t_ns", "p_g"]
    manifest = json.loads((out / MANIFEST).read_text())
    assert manifest["config"]["T_ns"] == 50.0 and "GHz" in manifest["units"]


def test_simulate_zero_amplitude(tmp_path):
    out = tmp_path / "zero"
    cfg = _config(tmp_path, **{**SECH3_50, "omega0_GHz": 0.0}, out_dir=str(out))
    assert main(["simulate", "--config", cfg]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_pf"] == 0.0 and summary["p_e_final"] == 0.0


def test_simulate_missing_duration(tmp_path, capsys):
    values = {k: v for k, v in SECH3_50.items() if k != "T_ns"}
    cfg = _config(tmp_path, **values, out_dir=str(tmp_path / "x"))
    assert main(["simulate", "--config", cfg]) == EXIT_CONFIG
    assert "T_ns" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    out = tmp_path / "o"
    cfg = _config(tmp_path, **{**SECH3_50, "omega0_GHz": 0.5}, out_dir=str(out))
    # 0.5 GHz is outside the box; the flag brings it back
    assert main(["simulate", "--config", cfg, "--omega0-GHz", "0.0"]) == EXIT_OK
    assert json.loads((out / MANIFEST).read_text())["config"]["omega0_GHz"] == 0.0


def test_out_of_box_parameter_exits_2(tmp_path, capsys):
    cfg = _config(tmp_path, **{**SECH3_50, "omega0_GHz": 0.5}, out_dir=str(tmp_path / "o"))
    assert main(["simulate", "--config", cfg]) == EXIT_CONFIG
    assert "omega0" in capsys.readouterr().err


@pytest.mark.parametrize(
    "bad",
    [
        {"omega0_MHz": 100},
        {"T_ns": "long"},
        {"schema_version": 2},
        {"beta": -2.0},
        {"model": "SG9"},
    ],
)
def test_config_errors_exit_2(tmp_path, bad):
    cfg = _config(tmp_path, **{**SECH3_50, **bad}, out_dir=str(tmp_path / "o"))
    assert main(["simulate", "--config", cfg]) == EXIT_CONFIG


def test_unreadable_config_exits_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_unknown_command_exits_2():
    assert main(["render"]) == EXIT_CONFIG


def test_resolve_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="speed_GHz"):
        resolve("scan", {**SECH3_50, "out_dir": "x", "speed_GHz": 1.0}, {})


# --- scan ---------------------------------------------------------------------


def test_amplitude_scan_log_grid(tmp_path):
    out = tmp_path / "amp"
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(out))
    argv = ["scan", "--config", cfg, "--axis", "amplitude", "--amp-points", "40", "--amp-log-spaced"]
    assert main(argv) == EXIT_OK
    rows = _rows(out / "scan.csv")
    assert rows[0] == ["x", "p_e_final"]
    x = np.array([r[0] for r in rows[1:]], dtype=float)
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(np.diff(np.log(x)), math.log(0.3 / 1e-3) / 39, rtol=1e-9)
    side = json.loads((out / "scan.json").read_text())
    assert side["axis"] == "amplitude_GHz"
    assert 0.0 <= side["width_at_nominal_GHz"] <= 0.3


def test_detuning_scan_reference_pulse(tmp_path):
    out = tmp_path / "det"
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(out))
    assert main(["scan", "--config", cfg, "--scan-step-GHz", "0.005", "--scan-xtol-GHz", "1e-6"]) == EXIT_OK
    side = json.loads((out / "scan.json").read_text())
    assert side["width_GHz"] == pytest.approx(0.16965, abs=2e-4)
    lo, hi = side["interval_GHz"]
    assert lo < 0 < hi


def test_inverted_scan_range_exits_2(tmp_path):
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(tmp_path / "o"), scan_lo_GHz=0.2, scan_hi_GHz=-0.2)
    assert main(["scan", "--config", cfg]) == EXIT_CONFIG


def test_bad_axis_exits_2(tmp_path):
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(tmp_path / "o"), axis="phase")
    assert main(["scan", "--config", cfg]) == EXIT_CONFIG


# --- pareto -------------------------------------------------------------------

PARETO_SMOKE = [
    "pareto", "--family", "SECH3", "--T", "50", "--seed", "3", "--population", "8",
    "--generations", "2", "--scan-step-GHz", "0.005",
]


@pytest.fixture(scope="module")
def smoke_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("pareto")
    codes = [main([*PARETO_SMOKE, "--out", str(base / name)]) for name in ("a", "b")]
    return base, codes


def test_pareto_seed_repeat_is_byte_identical(smoke_runs):
    base, codes = smoke_runs
    assert codes == [EXIT_OK, EXIT_OK]
    assert (base / "a" / "archive.csv").read_bytes() == (base / "b" / "archive.csv").read_bytes()
    assert (base / "a" / "hypervolume.csv").read_bytes() == (base / "b" / "hypervolume.csv").read_bytes()
    manifest = json.loads((base / "a" / MANIFEST).read_text())
    assert manifest["seed"] == 3 and manifest["ga_config"]["population"] == 8


def test_pareto_threads_from_environment(smoke_runs, tmp_path, monkeypatch):
    base, _ = smoke_runs
    monkeypatch.setenv("QPP_THREADS", "2")
    assert main([*PARETO_SMOKE, "--out", str(tmp_path / "t")]) == EXIT_OK
    assert json.loads((tmp_path / "t" / MANIFEST).read_text())["threads"] == 2
    a, t = load_run(base / "a"), load_run(tmp_path / "t")
    assert [e.genes.tolist() for e in a.front] == [e.genes.tolist() for e in t.front]


def test_bad_thread_count_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("QPP_THREADS", "zero")
    assert main([*PARETO_SMOKE, "--out", str(tmp_path / "t")]) == EXIT_CONFIG


@pytest.mark.parametrize("extra", [["--population", "7"], ["--population", "4"], ["--family", "XX"]])
def test_pareto_bad_ga_config_exits_2(tmp_path, extra):
    assert main([*PARETO_SMOKE, *extra, "--out", str(tmp_path / "p")]) == EXIT_CONFIG


def test_pareto_requires_seed(tmp_path):
    argv = [a for a in PARETO_SMOKE if a not in ("--seed", "3")]
    assert main([*argv, "--out", str(tmp_path / "p")]) == EXIT_CONFIG


def test_pareto_job_list_writes_one_directory_per_job(tmp_path):
    argv = [*PARETO_SMOKE, "--family", "SG1,SECH3", "--generations", "0", "--out", str(tmp_path / "m")]
    assert main(argv) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "m").iterdir() if p.is_dir()) == ["SECH3_50ns", "SG1_50ns"]


# --- lz -----------------------------------------------------------------------


def test_lz_zero_amplitude_has_zero_width(tmp_path):
    out = tmp_path / "lz"
    cfg = _config(tmp_path, **{**SECH3_50, "omega0_GHz": 0.0}, out_dir=str(out))
    assert main(["lz", "--config", cfg]) == EXIT_OK
    bound = json.loads((out / "lz_bound.json").read_text())
    assert bound["width_GHz"] == 0.0


def test_lz_reference_pulse_and_band(tmp_path, smoke_runs):
    base, _ = smoke_runs
    out = tmp_path / "lz"
    cfg = _config(tmp_path, **SECH3_50, out_dir=str(out), archive_dirs=[str(base / "a")])
    assert main(["lz", "--config", cfg]) == EXIT_OK
    bound = json.loads((out / "lz_bound.json").read_text())
    assert bound["width_GHz"] == pytest.approx(0.2445, abs=1e-3)
    assert _rows(out / "band_envelope.csv")[0][0] == "T_ns"


def test_lz_needs_input(tmp_path):
    assert main(["lz", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


# --- morris -------------------------------------------------------------------


def test_morris_rejects_single_sample(tmp_path, smoke_runs):
    base, _ = smoke_runs
    argv = ["morris", "--archive-dirs", str(base / "a"), "--N", "1", "--out", str(tmp_path / "m")]
    assert main(argv) == EXIT_CONFIG


def test_morris_writes_tables(tmp_path, smoke_runs):
    base, _ = smoke_runs
    out = tmp_path / "m"
    argv = ["morris", "--archive-dirs", str(base / "a"), "--outputs", "max_pf", "--N", "2", "--out", str(out)]
    assert main(argv) == EXIT_OK
    table = _rows(out / "ratio_table_max_pf.csv")
    assert table[0][:4] == ["model", "omega0", "n", "beta_epsilon"]
    assert table[1][0] == "SECH3 (50 ns)"
    assert _rows(out / "scatter_max_pf.csv")[0] == ["model", "T_ns", "param", "mu_star", "sigma"]


def test_morris_unknown_output_exits_2(tmp_path, smoke_runs):
    base, _ = smoke_runs
    argv = ["morris", "--archive-dirs", str(base / "a"), "--outputs", "fidelity", "--out", str(tmp_path / "m")]
    assert main(argv) == EXIT_CONFIG


# --- stored front -------------------------------------------------------------


def test_scan_of_front_entry_near_20_mhz(tmp_path):
    run = DATA / "runs" / "SG1_50"
    if not (run / "manifest.json").exists():
        pytest.skip("stored SG1 50 ns run not generated")
    archive = load_run(run)
    entry = min(archive.front, key=lambda e: abs(e.objective.det_rob - 0.02))
    genes = dict(zip(archive.gene_names, entry.genes))
    values = {
        "model": "SG1", "T_ns": 50, "omega0_GHz": genes["omega0"], "n": genes["n"], "beta": genes["beta"],
        "k_GHz": [genes["k1"]],
    }
    out = tmp_path / "s"
    assert main(["scan", "--config", _config(tmp_path, **values, out_dir=str(out))]) == EXIT_OK
    width = json.loads((out / "scan.json").read_text())["width_GHz"]
    assert width == pytest.approx(entry.objective.det_rob, abs=1e-4)
    assert width == pytest.approx(0.02, abs=0.01)
