import json
import math

import numpy as np
import pytest

from qutrit_pareto.dynamics import PhysicsConstants, QutritTrajectory, evolve
from qutrit_pareto.metrics import (
    AmplitudeScanConfig,
    Crossing,
    ScanConfig,
    ScanCurve,
    amplitude_robustness,
    amplitude_scan,
    centred_width,
    detuning_scan,
    first_qualified,
    max_transient_pf,
    objectives,
    qualified_at,
    refined_max,
    robust_intervals,
    robustness_width,
    scan_function,
)
from qutrit_pareto.pulses import model_from_vector

GAUSS_WIDTH = 0.0097725180029607227448  # 2*0.05*sqrt(ln(0.9995/0.99)), mpmath


def gauss(x):
    return 0.9995 * np.exp(-((np.asarray(x) / 0.05) ** 2))


def test_gaussian_width_analytic():
    curve = scan_function(gauss, np.arange(-0.3, 0.3 + 5e-4, 1e-3), 1e-7)
    assert robustness_width(curve) == pytest.approx(GAUSS_WIDTH, abs=2e-7)
    assert len(curve.crossings) == 2 and curve.crossings[0].rising and not curve.crossings[1].rising


def test_width_stable_under_grid_refinement():
    coarse = scan_function(gauss, np.linspace(-0.3, 0.3, 301), 1e-5).width
    fine = scan_function(gauss, np.linspace(-0.3, 0.3, 601), 1e-5).width
    assert abs(coarse - fine) < 2e-5


def two_lobes(x):
    x = np.asarray(x)
    return 0.995 * np.exp(-(((x + 0.1) / 0.03) ** 2)) + 0.9995 * np.exp(-(((x - 0.1) / 0.03) ** 2))


def test_unqualified_lobe_is_skipped():
    curve = scan_function(two_lobes, np.linspace(-0.3, 0.3, 601), 1e-8)
    ivs = robust_intervals(curve)
    assert [iv.qualified for iv in ivs] == [False, True]
    expected = 2 * 0.03 * math.sqrt(math.log(0.9995 / 0.99))
    assert curve.width == pytest.approx(expected, abs=1e-6)


def test_never_reaches_threshold():
    curve = scan_function(lambda x: 0.98 * np.ones_like(x), np.linspace(-0.1, 0.1, 21), 1e-5)
    assert curve.width == 0.0 and curve.crossings == ()


def test_plateau_is_unbounded():
    curve = scan_function(lambda x: np.full_like(x, 0.9999), np.linspace(-0.3, 0.3, 61), 1e-5)
    assert curve.crossings == ()
    assert curve.width == pytest.approx(0.6)
    assert curve.unbounded


def test_early_stop_agrees_with_full_scan():
    grid = np.linspace(-0.3, 0.3, 601)
    full = scan_function(two_lobes, grid, 1e-7)
    early = scan_function(two_lobes, grid, 1e-7, stop_after_qualified=True, block=50)
    assert early.width == full.width
    assert not early.complete and early.x.size < grid.size


def twin_lobes(x):
    x = np.asarray(x)
    return 0.9995 * (np.exp(-(((x + 0.1) / 0.03) ** 2)) + np.exp(-(((x - 0.1) / 0.03) ** 2)))


def test_centred_width_picks_interval_around_point():
    grid = np.linspace(-0.3, 0.3, 601)
    lobe = 2 * 0.03 * math.sqrt(math.log(0.9995 / 0.99))
    curve = scan_function(two_lobes, grid, 1e-8)
    assert centred_width(curve, 0.1) == pytest.approx(lobe, abs=1e-6)
    assert centred_width(curve, 0.0) == 0.0  # between the lobes
    assert qualified_at(curve, -0.1) is None  # unqualified lobe
    twins = scan_function(twin_lobes, grid, 1e-8)
    assert qualified_at(twins, 0.1).start > 0 > first_qualified(twins).end


def test_centred_early_stop_passes_earlier_lobes():
    grid = np.linspace(-0.3, 0.3, 601)
    full = scan_function(twin_lobes, grid, 1e-7)
    early = scan_function(twin_lobes, grid, 1e-7, stop_after_qualified=True, block=50, centre=0.1)
    assert centred_width(early, 0.1) == centred_width(full, 0.1) > 0
    assert not early.complete and early.x.max() > 0.1


def test_off_resonant_pulse_is_infeasible():
    # transfers only at delta ~ +0.016 GHz; p_e(0) = 0.401
    m = model_from_vector("SG4", [0.0138, 2.5736, -2.1331, 0.0074, 0.0633, 4.3931, 7.9766], 200.0)
    iv = first_qualified(detuning_scan(m))
    assert iv is not None and iv.start > 0
    point = objectives(m)
    assert point.det_rob == 0.0 and not point.feasible
    assert point.violation == pytest.approx(1 - 0.40116, abs=1e-4)


def test_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        scan_function(gauss, np.array([0.0, -0.1, 0.1]), 1e-5)


def test_refined_max_quadratic_vertex():
    t = np.linspace(-50, 50, 2001)
    pf = 0.01 * np.cos(np.pi * t / 100) ** 2
    assert refined_max(pf) == pytest.approx(0.01, abs=1e-15)
    shifted = 0.01 * np.cos(np.pi * (t - 0.0123) / 100) ** 2
    assert refined_max(shifted) == pytest.approx(0.01, rel=1e-9)
    assert refined_max(shifted) >= shifted.max()


def test_max_transient_pf_zero_drive():
    m = model_from_vector("SG1", [0.0, 2.0, -3.0, 0.1], 100.0)
    assert max_transient_pf(evolve(m)) == 0.0


def test_max_transient_pf_synthetic_trajectory():
    t = np.linspace(-50, 50, 2001)
    amp = np.zeros((t.size, 3), dtype=complex)
    amp[:, 2] = 0.1 * np.cos(np.pi * t / 100)
    amp[:, 0] = np.sqrt(1 - np.abs(amp[:, 2]) ** 2)
    traj = QutritTrajectory(t, amp, None, 0.0)
    assert max_transient_pf(traj) == pytest.approx(0.01, abs=1e-15)


def test_max_pf_bounds_final_pf(sech3_200):
    traj = evolve(sech3_200)
    assert max_transient_pf(traj) >= traj.p_f[-1]


def test_sech3_200_max_pf_frozen(sech3_200):
    # converged value; the pulse sits at the front's high-robustness end (0.27 GHz)
    assert max_transient_pf(evolve(sech3_200)) == pytest.approx(0.0222783, abs=2e-6)


def test_zero_drive_detuning_scan():
    m = model_from_vector("SG1", [0.0, 2.0, -3.0, 0.1], 50.0)
    curve = detuning_scan(m, config=ScanConfig(-0.1, 0.1, 0.01))
    assert np.all(curve.pe == 0.0) and curve.crossings == () and curve.width == 0.0


def test_sech3_50_qualified_interval_contains_zero(sech3_50):
    curve = detuning_scan(sech3_50)
    iv = [iv for iv in curve.intervals() if iv.qualified][0]
    assert iv.start < 0 < iv.end
    assert curve.width > 0.1


def test_detuning_scan_csv_and_sidecar(tmp_path, sech3_50):
    curve = detuning_scan(sech3_50, config=ScanConfig(-0.15, 0.15, 0.005))
    curve.to_csv(tmp_path / "c.csv")
    curve.write_sidecar(tmp_path / "c.json")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "x,p_e_final" and len(lines) == curve.x.size + 1
    side = json.loads((tmp_path / "c.json").read_text())
    assert {"crossings_GHz", "width_GHz", "qualified"} <= set(side)
    assert side["width_GHz"] == curve.width


def test_amplitude_scan_below_threshold():
    m = model_from_vector("SECH3", [0.05, 1.0, 2.0, -0.15, 2.0], 50.0)
    curve = amplitude_scan(m, config=AmplitudeScanConfig(1e-4, 2e-3, 40))
    assert curve.width == 0.0


def test_amplitude_grid_is_log_spaced():
    x = AmplitudeScanConfig(1e-3, 0.3, 50).grid()
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(np.diff(np.log(x)), np.log(300) / 49)


def test_amplitude_scan_zero_amplitude_sample():
    m = model_from_vector("SG1", [0.0, 2.0, -3.0, 0.0], 50.0)
    curve = amplitude_scan(m, config=AmplitudeScanConfig(0.0, 1e-4, 8, log_spaced=False))
    assert curve.pe[0] == 0.0 and np.all(curve.pe < 1e-4) and curve.width == 0.0


def test_amplitude_robustness_uses_window_at_nominal_amplitude():
    # stored 50 ns front pulse: transfers at its own omega0 without reaching 0.999 there,
    # while a later Rabi lobe is fully qualified
    m = model_from_vector("SG1", [0.02142467642564339, 3.0340955532193994, -1.1139711210270173, 0.046820999642549585], 50.0)
    curve = amplitude_scan(m)
    omega0 = m.envelope.omega0
    first = first_qualified(curve)
    assert first is not None and first.start > omega0 and curve.width > 0
    assert qualified_at(curve, omega0) is None
    assert amplitude_robustness(m) == 0.0
    assert amplitude_robustness(m) == centred_width(curve, omega0)


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(0.1, -0.1)
    with pytest.raises(ValueError):
        AmplitudeScanConfig(0.0, 0.3, log_spaced=True)


def test_objectives_zero_drive():
    m = model_from_vector("SG1", [0.0, 2.0, -3.0, 0.1], 50.0)
    p = objectives(m)
    assert (p.max_pf, p.det_rob, p.feasible, p.violation) == (0.0, 0.0, False, 1.0)


def test_objectives_sech3_50(sech3_50):
    p = objectives(sech3_50)
    assert p.feasible and p.det_rob > 0.1
    assert p.det_rob == pytest.approx(0.16965, abs=2e-4)


def test_detuning_sign_changes_leakage(sech3_50):
    flipped = sech3_50.with_detuning_sign_flipped()
    a = max_transient_pf(evolve(sech3_50))
    b = max_transient_pf(evolve(flipped))
    assert abs(a - b) > 1e-3
    # flipping the pulse equals flipping the Hamiltonian orientation
    c = max_transient_pf(evolve(sech3_50, constants=PhysicsConstants(detuning_sign=1.0)))
    assert b == pytest.approx(c, abs=1e-12)


def test_width_shrinks_as_drive_vanishes(sech3_50):
    widths = [objectives(sech3_50.with_omega0(om)).det_rob for om in (0.1, 0.09, 0.003)]
    assert widths[0] > widths[1] > widths[2] == 0.0


def test_scancurve_crossing_type():
    c = ScanCurve("detuning_GHz", np.array([0.0, 1.0]), np.array([0.0, 1.0]), (Crossing(0.5, True),))
    ivs = c.intervals()
    assert len(ivs) == 1 and ivs[0].open_end and ivs[0].qualified
