import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from bimono import lv
from bimono.core import lv_energy


@pytest.fixture(scope="module")
def cycle_1e2():
    return lv.solve_cycle(1.0, 0.01)


@settings(max_examples=40, deadline=None)
@given(E=st.floats(1e-8, 10.0), eps=st.floats(1e-4, 0.3))
def test_diagonal_start_has_requested_energy(E, eps):
    v = lv.diagonal_start(E, eps)
    assert v > eps
    # [DERIVED] mpmath energy of the diagonal point
    mp.mp.dps = 40
    vv, e = mp.mpf(v), mp.mpf(eps)
    E_mp = 2 * (vv - e) - 2 * e * mp.log(vv / e)
    assert float(E_mp) == pytest.approx(E, rel=1e-10)


def test_diagonal_start_rejects_nonpositive_energy():
    with pytest.raises(lv.CycleError):
        lv.diagonal_start(0.0, 0.1)


def test_period_against_independent_integration():
    # [DERIVED] crossing time of v = w from above, located by scipy's Radau in natural variables
    E, eps = 0.3, 0.1
    rec = lv.solve_cycle(E, eps)
    v0 = rec.v0

    def f(t, y):
        return [-y[0] * y[1] + eps * y[0], y[0] * y[1] - eps * y[1]]

    def diag(t, y):
        return y[0] - y[1]
    diag.direction = -1
    diag.terminal = True
    opts = dict(method="Radau", rtol=1e-12, atol=1e-14)
    head = solve_ivp(f, (0, 1.0), [v0, v0], **opts)
    sol = solve_ivp(f, (1.0, 1000), head.y[:, -1], events=diag, **opts)
    assert rec.T == pytest.approx(sol.t_events[0][0], rel=1e-7)


def test_small_amplitude_period_is_harmonic():
    # [DERIVED] linearisation about (eps, eps) has frequency eps
    eps = 0.1
    rec = lv.solve_cycle(1e-9, eps)
    assert rec.T * eps / (2 * math.pi) == pytest.approx(1.0, rel=1e-6)


def test_cycle_record_invariants(cycle_1e2):
    rec = cycle_1e2
    s = rec.t_stages
    order = [s[k] for k in ("t1", "t12", "t2", "t23", "t3", "t34", "t4", "t5")]
    assert all(a < b for a, b in zip(order, order[1:]))
    assert rec.energy_drift < 1e-9
    # [DERIVED] d log w/dt = v - eps and d log v/dt = eps - w integrate to zero over a period
    assert rec.mean_v == pytest.approx(rec.epsilon, rel=1e-9)
    assert rec.mean_w == pytest.approx(rec.epsilon, rel=1e-9)
    assert rec.Y_T == pytest.approx(0.0, abs=1e-9 * rec.Y_max)
    assert rec.D == pytest.approx(rec.epsilon * rec.T, rel=1e-9)
    row = rec.row()
    assert tuple(row) == lv.CSV_COLUMNS


@pytest.mark.parametrize("E,eps", [(0.5, 0.01), (0.25, 0.005), (2.0, 0.05)])
def test_energy_scaling_law(E, eps):
    # [DERIVED] (v, w)(t) for (E, eps) is E (v, w)(E t) for (1, eps/E)
    rep = lv.check_scaling(E, eps)
    assert max(rep.dev_T, rep.dev_D, rep.dev_orbit) < 1e-6


def test_stage_ratios_tend_to_one():
    # [PAPER] stage durations log(1/eps), log(1/eps)/eps, 1/eps^2, log(1/eps)/eps, log(1/eps)
    rows = lv.check_stage_asymptotics([1e-2, 1e-3])
    for key in ("t1", "t2-t1", "t3-t2", "t5-t4"):
        assert abs(rows[1][key] - 1) < max(0.05, abs(rows[0][key] - 1))
        assert 0.75 <= rows[1][key] <= 1.25


def test_displacement_profile(cycle_1e2):
    rep = lv.displacement_and_diffusion(cycle_1e2)
    assert rep.Y_increasing_0_t2 and rep.Y_decreasing_t3_t5
    assert rep.Y_flat_variation_t2_t3 < 0.05
    # [PAPER] Y_max and D are both about 1/eps; diffusion concentrates in the two slow stages
    assert 0.5 < rep.Y_max_eps < 2.0
    assert 0.5 < rep.D_eps < 2.0
    assert rep.share_12 + rep.share_34 > 0.8
    assert rep.share_outside == pytest.approx(1 - rep.share_12 - rep.share_34)


def test_energy_drift_small_along_orbit(cycle_1e2):
    t = np.linspace(0, cycle_1e2.T, 200)
    v, w = cycle_1e2.vw(t)
    E = lv_energy(v, w, 0.01)
    assert np.max(np.abs(E - 1.0)) < 1e-9


def test_csv_writer(tmp_path, cycle_1e2):
    p = tmp_path / "cycles.csv"
    lv.write_cycle_csv([cycle_1e2], p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == list(lv.CSV_COLUMNS)
    assert len(lines) == 2
