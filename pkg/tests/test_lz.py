import math

import numpy as np
import pytest

from qutrit_pareto.lz import (
    BAND_HEADER,
    NoCrossingError,
    adiabatic_band,
    band_point,
    crossing_roots,
    crossing_time,
    gamma_threshold,
    lz_gamma,
    lz_robustness,
)
from qutrit_pareto.metrics import detuning_scan
from qutrit_pareto.pulses import MODEL_NAMES, DetuningKind, DetuningParams, detuning_rate, model_from_vector, search_box


def test_gamma_threshold_value():
    assert gamma_threshold(0.99) == pytest.approx(math.log(100) / (2 * math.pi), rel=1e-15)
    assert gamma_threshold(0.99) == pytest.approx(0.7329, abs=1e-4)


def test_linear_crossing_time():
    T, k1, delta = 80.0, 0.2, 0.03
    v = 2 * k1 / T
    assert crossing_time(DetuningParams(DetuningKind.LINEAR, (k1,)), delta, T) == pytest.approx(-delta / v, abs=1e-9)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_crossing_at_zero_without_offset(name):
    rng = np.random.default_rng(8)
    lo, hi = search_box(name)
    m = model_from_vector(name, lo + rng.random(lo.size) * (hi - lo), 50.0)
    assert crossing_time(m.detuning, 0.0, 50.0) == pytest.approx(0.0, abs=1e-9)


def test_tanh_saturation_has_no_crossing():
    det = DetuningParams(DetuningKind.TANH, (0.1,), (3.0,))
    with pytest.raises(NoCrossingError):
        crossing_time(det, 0.12, 50.0)


def test_multiple_roots_pick_nearest_zero():
    # 0.1 x - 0.1 x^3 + 0.02 crosses three times on [-1, 1]
    det = DetuningParams(DetuningKind.QUINTIC, (0.1, 0.0, -0.1, 0.0, 0.0))
    roots = crossing_roots(det, 0.0, 100.0)
    assert len(roots) == 3
    np.testing.assert_allclose(roots, [-50.0, 0.0, 50.0], atol=1e-6)
    roots = crossing_roots(det, -0.02, 100.0)
    assert len(roots) >= 2
    t0 = crossing_time(det, -0.02, 100.0)
    assert abs(t0) == min(abs(r) for r in roots)


def test_gamma_zero_drive():
    m = model_from_vector("SG1", [0.0, 2.0, -3.0, 0.1], 50.0)
    assert lz_gamma(m, 0.0) == 0.0


def test_gamma_linear_closed_form():
    omega0, T, k1 = 0.04, 120.0, 0.2
    m = model_from_vector("SG1", [omega0, 10.0, -6.0, k1], T)
    assert lz_gamma(m, 0.0) == pytest.approx(2 * math.pi * omega0**2 * T / (8 * k1), rel=1e-12)


def test_gamma_sg3_closed_form():
    omega0, T, k1, g1 = 0.05, 100.0, 0.15, 2.5
    m = model_from_vector("SG3", [omega0, 2.0, -3.0, k1, g1], T)
    rate = k1 * 2 * g1 / T
    assert lz_gamma(m, 0.0) == pytest.approx(2 * math.pi * omega0**2 / (4 * rate), rel=1e-12)
    h = 1e-6 * T
    fd = (m.detuning_at(h) - m.detuning_at(-h)) / (2 * h)
    assert detuning_rate(m.detuning, 0.0, T) == pytest.approx(fd, rel=1e-6)


def test_unreachable_threshold_gives_zero_width():
    m = model_from_vector("SG1", [0.005, 2.0, -3.0, 0.3], 50.0)
    assert lz_gamma(m, 0.0) < gamma_threshold()
    b = lz_robustness(m)
    assert b.width == 0.0 and not b.feasible


def test_linear_flat_top_is_symmetric():
    m = model_from_vector("SG1", [0.05, 10.0, -6.0, 0.1], 200.0)
    b = lz_robustness(m, xtol=1e-7)
    assert b.delta_minus == pytest.approx(-b.delta_plus, abs=2e-7)
    assert b.width == pytest.approx(2 * b.delta_plus, abs=4e-7)


def test_boundary_sits_on_threshold():
    m = model_from_vector("SECH3", [0.06, 1.1, 3.0, -0.15, 2.9], 200.0)
    b = lz_robustness(m, xtol=1e-9)
    g_thr = gamma_threshold()
    assert b.gamma_at(b.delta_plus - 1e-8) >= g_thr * (1 - 1e-6)
    assert b.gamma_at(b.delta_plus + 1e-6) < g_thr


def test_lower_threshold_never_narrows():
    m = model_from_vector("SECH3", [0.06, 1.1, 3.0, -0.15, 2.9], 200.0)
    assert lz_robustness(m, p_thresh=0.9).width >= lz_robustness(m, p_thresh=0.99).width


def test_bound_not_tighter_than_simulation(sech3_200):
    lz = lz_robustness(sech3_200)
    sim = detuning_scan(sech3_200).width
    assert lz.width >= sim
    assert lz.constrained


def test_band_points_and_csv(tmp_path, sech3_200):
    zero = model_from_vector("SECH3", [0.0, 1.0, 2.0, -0.15, 2.0], 200.0)
    p0 = band_point(zero)
    assert (p0.det_rob_lz, p0.max_pf_adiabatic) == (0.0, 0.0)
    band = adiabatic_band([zero, sech3_200, sech3_200.with_omega0(0.05)])
    env = band.envelope(200.0, bins=4)
    for p in band.points:
        assert env.contains(p.det_rob_lz, p.max_pf_adiabatic)
    band.to_csv(tmp_path / "band.csv")
    lines = (tmp_path / "band.csv").read_text().splitlines()
    assert lines[0] == ",".join(BAND_HEADER) and len(lines) == 4
    with pytest.raises(ValueError):
        band.envelope(50.0)
