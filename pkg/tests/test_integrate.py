import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimono import core, integrate as it
from bimono.core import SimState, SystemParams
from bimono.integrate import Event, StepperConfig


def test_linear_oscillator_against_closed_form():
    # [DERIVED] y'' = -y has cos/sin as exact solution
    f = lambda t, y: np.array([y[1], -y[0]])
    traj = it.integrate_ode(f, [1.0, 0.0], (0.0, 20.0), StepperConfig(1e-13, 1e-12), keep_dense=True)
    t = np.linspace(0, 20, 501)
    y = traj.sol(t)
    np.testing.assert_allclose(y[0], np.cos(t), atol=1e-10)
    np.testing.assert_allclose(y[1], -np.sin(t), atol=1e-10)


def test_events_direction_and_guard():
    f = lambda t, y: np.array([y[1], -y[0]])
    ev = [Event("down", lambda t, y: y[0], direction=-1),
          Event("up", lambda t, y: y[0], direction=+1),
          Event("late", lambda t, y: y[0], guard=lambda t, y: t > 10.0)]
    traj = it.integrate_ode(f, [1.0, 0.0], (0.0, 4 * math.pi), StepperConfig(1e-13, 1e-12), events=ev)
    down = [h.t for h in traj.hits("down")]
    up = [h.t for h in traj.hits("up")]
    np.testing.assert_allclose(down, [math.pi / 2, 5 * math.pi / 2], atol=1e-10)
    np.testing.assert_allclose(up, [3 * math.pi / 2, 7 * math.pi / 2], atol=1e-10)
    assert all(h.t > 10 for h in traj.hits("late")) and len(traj.hits("late")) == 1


def test_terminal_event_stops():
    f = lambda t, y: np.array([1.0])
    traj = it.integrate_ode(f, [0.0], (0.0, 10.0), events=[Event("hit", lambda t, y: y[0] - 2.5, terminal=True)])
    assert traj.status == "stopped"
    assert traj.events[0].t == pytest.approx(2.5, abs=1e-12)
    assert traj.t[-1] < 10.0


def test_budget_and_config_errors():
    f = lambda t, y: -y
    with pytest.raises(it.BudgetError):
        it.integrate_ode(f, [1.0], (0.0, 100.0), StepperConfig.fixed(0.01, max_steps=10))
    with pytest.raises(ValueError):
        StepperConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        StepperConfig(h_min=1.0, h_max=0.5)
    with pytest.raises(ValueError):
        StepperConfig(order=5)
    with pytest.raises(ValueError):
        it.integrate_ode(f, [1.0], (1.0, 0.0))
    traj = it.integrate_ode(f, [1.0], (0.0, 1.0))
    with pytest.raises(ValueError):
        traj.sol(0.5)


def test_fixed_step_count():
    traj = it.integrate_ode(lambda t, y: -y, [1.0], (0.0, 1.0), StepperConfig.fixed(0.125))
    assert traj.n_steps == 8
    assert traj.y[-1, 0] == pytest.approx(math.exp(-1), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(deg=st.integers(0, 15), a=st.floats(-2, 2), h=st.floats(0.01, 3))
def test_gauss_legendre_exact_for_polynomials(deg, a, h):
    # [DERIVED] 8-point rule integrates degree <= 15 exactly
    interp = lambda t: np.atleast_2d(t)
    val = it.gauss_legendre_on_step(interp, a, a + h, lambda t, y: y[0] ** deg)
    exact = ((a + h) ** (deg + 1) - a ** (deg + 1)) / (deg + 1)
    assert val == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_lv_energy_conserved_in_log_variables():
    eps = 0.01
    x0 = math.log(0.4)
    E0 = core.lv_energy_log(x0, x0, eps)
    traj = it.integrate_log_lv(eps, x0, x0, (0.0, 3000.0), StepperConfig(1e-13, 1e-12))
    E = core.lv_energy_log(traj.y[:, 0], traj.y[:, 1], eps)
    assert np.max(np.abs(E - E0)) / E0 < 1e-9
    # v dips to ~exp(-1/eps); natural variables would underflow the scale
    assert traj.y[:, 0].min() < -40


def test_log_pack_roundtrip_and_validation():
    s = SimState(1.0, 0.3, 0.2, np.array([0.1, 0.2]))
    back = it.unpack_log_state(1.0, it.pack_log_state(s))
    assert back.v == pytest.approx(0.3) and back.w == pytest.approx(0.2)
    np.testing.assert_array_equal(back.c, s.c)
    with pytest.raises(ValueError):
        it.pack_log_state(SimState(0.0, 0.0, 0.2, [0.1]))


def test_full_system_invariants_to_roundoff():
    params = SystemParams(0.05, n_max=60)
    ss = core.steady_state(params)
    c = ss.c_bar * (1 + 0.3 * np.cos(np.arange(60)))
    c *= params.epsilon / c.sum()
    j = np.arange(1, 61)
    vw = (1 - (j * c).sum()) / 2
    s0 = SimState(0.0, vw, vw, c)
    traj = it.integrate_log_full(params, s0, (0.0, 500.0), StepperConfig(1e-13, 1e-11))
    N = np.array([core.fsum(y[2:]) for y in traj.y])
    M = np.exp(traj.y[:, 0]) + np.exp(traj.y[:, 1]) + traj.y[:, 2:] @ j
    assert np.max(np.abs(N - N[0])) / N[0] < 1e-13
    assert np.max(np.abs(M - 1.0)) < 1e-9


def test_full_system_rejects_bad_input():
    params = SystemParams(0.05, n_max=10)
    with pytest.raises(ValueError):
        it.integrate_log_full(params, SimState(0.0, 0.1, 0.1, np.ones(5)), (0.0, 1.0))
    with pytest.raises(ValueError):
        it.integrate_log_full(params, SimState(0.0, 0.1, 0.1, -np.ones(10)), (0.0, 1.0))


def test_scheme_failure_on_negative_clusters():
    # a huge fixed step drives c negative far beyond abs_tol
    params = SystemParams(0.05, n_max=10)
    c = np.zeros(10)
    c[0] = 0.05
    with pytest.raises(it.SchemeFailure):
        it.integrate_log_full(params, SimState(0.0, 0.1, 5.0, c), (0.0, 50.0), StepperConfig.fixed(5.0))
