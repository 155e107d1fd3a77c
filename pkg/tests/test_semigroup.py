import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from bimono import semigroup as sg
from bimono.semigroup import ClusterProfile, PanelGrid, QuadratureError, RegimeError

A = 2.0 / math.pi


@settings(max_examples=25, deadline=None)
@given(eta=st.floats(-3.0, 3.0), s=st.floats(1e-3, 2.0))
def test_kernels_against_quadrature(eta, s):
    # [DERIVED] closed forms against adaptive quadrature of the Gaussian
    tail = quad(lambda z: sg.heat_kernel(z - eta, s), -np.inf, 0.0, epsabs=1e-14)[0]
    assert sg.half_line_tail(eta, s) == pytest.approx(tail, abs=1e-10)
    h = quad(lambda x: x * sg.heat_kernel(x + eta, s), 0.0, np.inf, epsabs=1e-14)[0]
    assert sg.first_moment_kernel(eta, s) == pytest.approx(h, abs=1e-10)


def test_heat_kernel_normalised_and_rejects_bad_time():
    assert quad(lambda z: sg.heat_kernel(z, 0.3), -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        sg.heat_kernel(0.0, 0.0)


def test_fixed_point_moments_and_equation():
    assert quad(sg.psi_fixed_point, 0, np.inf)[0] == pytest.approx(1.0, abs=1e-12)
    assert quad(lambda x: x * sg.psi_fixed_point(x), 0, np.inf)[0] == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(0, 20, 2001)
    assert np.max(np.abs(sg.psi_equation_residual(x))) < 1e-15


@given(deg=st.integers(0, 15))
def test_panel_quadrature_and_interpolation_exact_on_polynomials(deg):
    g = PanelGrid(x_max=3.0, panel=0.5, order=8)
    x, w = g.nodes_weights()
    assert np.dot(w, x ** deg) == pytest.approx(3.0 ** (deg + 1) / (deg + 1), rel=1e-12)
    if deg < 8:
        xs = np.linspace(0, 3, 37)
        np.testing.assert_allclose(g.interpolate(x ** deg, xs), xs ** deg, rtol=1e-10, atol=1e-12)
    assert g.interpolate(np.ones_like(x), np.array([-0.1, 3.1])).tolist() == [0.0, 0.0]


@pytest.mark.parametrize("m", [0.0, 0.3, 0.7])
def test_half_gaussian_moments(m):
    p = ClusterProfile.half_gaussian(m, grid=sg.grid_for(1e-2, x_max=30.0))
    m0, m1 = p.moments()
    assert m0 == pytest.approx(1.0, abs=1e-9)
    assert m1 == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        ClusterProfile.half_gaussian(1.0)


@pytest.mark.parametrize("s2", [1e-3, 1e-4])
def test_one_step_from_fixed_point(s2):
    p = ClusterProfile.from_function(sg.psi_fixed_point, grid=sg.grid_for(s2, x_max=12.0))
    q = sg.iterate_profile(p, s2)
    m0, m1 = q.moments()
    assert m0 == pytest.approx(1.0, abs=1e-9) and m1 == pytest.approx(1.0, abs=1e-9)
    # [DERIVED] leading orders: reflected weight psi(0) sqrt(s/pi), length gain psi(0) s/2
    assert q.m == pytest.approx(A * math.sqrt(s2 / math.pi), rel=0.05)
    assert q.L - 1.0 == pytest.approx(A * s2 / 2, rel=0.05)


def test_linearized_map_fixes_psi_to_second_order():
    # [DERIVED] psi + s psi'' = rescaled psi up to O(s^2), so the error drops 100x per decade
    errs = []
    for s2 in (1e-3, 1e-4):
        p = ClusterProfile.from_function(sg.psi_fixed_point, grid=sg.grid_for(s2, x_max=12.0))
        errs.append(sg.l1_distance(sg.iterate_linearized(p, s2)))
    assert errs[0] < 1e-6
    assert errs[0] / errs[1] == pytest.approx(100.0, rel=0.1)


def test_shape_distance_ignores_scale():
    g = sg.grid_for(1e-2, x_max=40.0)
    p = ClusterProfile.from_function(lambda x: 3.0 * sg.psi_fixed_point(x / 2.0), grid=g)
    assert sg.shape_distance(p) < 1e-9
    assert sg.l1_distance(p) > 1.0


def test_resolution_guard():
    p = ClusterProfile.from_function(sg.psi_fixed_point, grid=PanelGrid(x_max=10.0, panel=0.5))
    with pytest.raises(QuadratureError):
        sg.iterate_profile(p, 1e-4)
    with pytest.raises(ValueError):
        sg.iterate_profile(p, 0.0)
    with pytest.raises(ValueError):
        ClusterProfile(1.0, 0.0, np.ones(3), PanelGrid())


def test_energy_decrement_direct_equals_closed_form():
    g = sg.grid_for(1e-2, x_max=12.0)
    for m in (0.0, 0.2):
        p = ClusterProfile.half_gaussian(m, L=20.0, grid=g)
        d = sg.energy_decrement(p, 1.0, 0.01, D=4.0)
        assert d["direct"] == pytest.approx(d["closed"], rel=1e-9)
        assert d["sigma2"] == pytest.approx(0.01)
    with pytest.raises(RegimeError):
        sg.energy_decrement(p, 0.005, 0.01)


def test_length_energy_recursion():
    L, E = sg.iterate_length_energy(10.0, 1.0, 0.01, A)
    assert L == pytest.approx(10.0 * (1 + A * 100 / 100))
    assert E == pytest.approx(1 - A / 10)
    with pytest.raises(RegimeError):
        sg.iterate_length_energy(10.0, 0.04, 0.01, A)


def test_envelope_limits():
    s = np.array([1e-10, 1e-6, 0.5, 5.0, 50.0, 2000.0])
    env = sg.envelope_solve(s, A)
    assert np.all(env.e + env.ell == 1.0)
    assert env.ell[0] / math.sqrt(2 * A * s[0]) == pytest.approx(1.0, rel=1e-4)
    # [DERIVED] e -> exp(-1 - A s) once ell is close to one
    assert env.e[4] == pytest.approx(math.exp(-1 - A * s[4]), rel=1e-9)
    assert env.e[5] == pytest.approx(math.exp(-1 - A * s[5]), rel=1e-12)
    ode = sg.envelope_ode(s[:5], A)
    np.testing.assert_allclose(ode.ell, env.ell[:5], rtol=1e-8)
    with pytest.raises(ValueError):
        sg.envelope_solve([1.0], 0.0)


def test_boundary_arrival_profiles():
    front = lambda s: math.exp(-s * s)
    tau = np.linspace(0.0, 6.0, 31)
    coll = sg.boundary_collision_c1(front, tau, 3.0)
    assert np.all(np.diff(coll) >= 0)
    assert coll[-1] == pytest.approx(math.sqrt(math.pi), rel=1e-6)
    chain = sg.boundary_chain_c1(front, tau, 3.0)
    assert chain[0] == pytest.approx(front(1 - 6.0))
    assert np.all(chain >= -1e-12)
