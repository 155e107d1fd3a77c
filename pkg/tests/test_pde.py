import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimono import pde
from bimono.pde import ConstantSignal, Grid1D, PdeState

coef = st.floats(-5.0, 5.0)
diff = st.floats(0.0, 20.0)


def _dense(a, b, n):
    ab = pde.banded_matrix(a, b, n)
    A = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
    return A


@given(a=coef, b=diff, n=st.integers(3, 40))
def test_columns_sum_to_one(a, b, n):
    # [DERIVED] column sums of one mean the discrete cluster number is invariant
    A = _dense(a, b, n)
    np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-12 * (1 + abs(a) + b))


@given(a=coef, b=diff, c=st.lists(st.floats(0, 1), min_size=3, max_size=30))
def test_apply_matches_dense_matrix(a, b, c):
    c = np.array(c)
    np.testing.assert_allclose(pde.apply_matrix(a, b, c), _dense(a, b, len(c)) @ c,
                               atol=1e-12 * (1 + abs(a) + b))


@settings(deadline=None)
@given(v=st.floats(0.0, 2.0), w=st.floats(0.0, 2.0), c=st.lists(st.floats(0, 1), min_size=5, max_size=30))
def test_step_inverts_matrix_and_conserves(v, w, c):
    grid = Grid1D(len(c) - 1.0, 1.0, 0.3)
    c = np.array(c)
    out = pde.step_implicit(PdeState(0.0, c), v, w, grid)
    a, b = pde.coefficients(v, w, grid)
    np.testing.assert_allclose(pde.apply_matrix(a, b, out.c), c, atol=1e-12 * (1 + c.sum()))
    assert out.c.sum() == pytest.approx(c.sum(), rel=1e-12, abs=1e-14)


def test_moment_identity_exact_per_step():
    # [DERIVED] first-moment increment = transport + boundary growth, evaluated at the new level
    grid = Grid1D(60.0, 0.5, 0.1)
    c0 = pde.gaussian_profile(grid, sigma=4.0)
    run = pde.run_coupled(c0, ConstantSignal(0.3, 0.9), 20.0, grid)
    inc = np.diff(run.moment)
    np.testing.assert_allclose(inc, run.growth[1:] + run.transport[1:], atol=1e-15)
    assert run.max_conservation_error < 1e-13


def test_drift_and_spreading_of_interior_gaussian():
    # [DERIVED] c_t + V c_j = (d/2) c_jj moves the centre at speed V and grows the variance at rate d
    grid = Grid1D(400.0, 0.25, 0.02)
    c0 = pde.gaussian_profile(grid, sigma=16.0, center=150.0)
    v, w = 0.4, 0.6
    run = pde.run_coupled(c0, ConstantSignal(v, w), 40.0, grid)
    c1 = run.final.c
    assert pde.centre_of_mass(c1, grid) - pde.centre_of_mass(c0, grid) == pytest.approx((w - v) * 40.0, rel=1e-3)
    assert pde.variance(c1, grid) - pde.variance(c0, grid) == pytest.approx((v + w) * 40.0, rel=2e-2)


def test_lv_signal_matches_dense_output():
    sig = pde.LVSignal(0.05, 0.2, 0.2, 200.0)
    t = np.array([0.0, 17.3, 120.0])
    v, w = sig.sample(t)
    z = sig.traj.sol(t)
    np.testing.assert_allclose(v, np.exp(z[0]), rtol=1e-6)
    np.testing.assert_allclose(w, np.exp(z[1]), rtol=1e-6)
    assert sig(17.3) == pytest.approx((v[1], w[1]))


def test_snapshots_and_diagnostics():
    grid = Grid1D(20.0, 1.0, 0.5)
    c0 = pde.gaussian_profile(grid)
    run = pde.run_coupled(c0, ConstantSignal(0.1, 0.1), 5.0, grid, snapshot_times=[0.0, 2.5], record_every=2)
    assert set(run.snapshots) == {0.0, 2.5}
    d = run.diagnostics()
    assert d["eps_final"] == pytest.approx(d["eps_initial"], rel=1e-14)
    assert run.times[-1] == pytest.approx(5.0)


def test_validation_errors():
    with pytest.raises(ValueError):
        Grid1D(10.0, 0.3, 0.1)
    with pytest.raises(ValueError):
        Grid1D(10.0, -1.0, 0.1)
    grid = Grid1D(10.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        pde.run_coupled(np.ones(3), ConstantSignal(0.1, 0.1), 1.0, grid)
    with pytest.raises(ValueError):
        pde.step_implicit(PdeState(0.0, np.ones(11)), -0.1, 0.1, grid)


def test_coarse_transport_warns():
    grid = Grid1D(10.0, 0.1, 1.0)
    with pytest.warns(RuntimeWarning):
        pde.run_coupled(np.ones(101), ConstantSignal(0.0, 1.0), 2.0, grid)
