import math

import numpy as np
import pytest
from scipy.integrate import quad

from bimono import blayer
from bimono.blayer import ConvergenceError
from bimono.semigroup import heat_kernel


@pytest.fixture(scope="module")
def layer():
    return blayer.solve_stationary()


def test_stationary_equations_hold(layer):
    assert layer.residual_U < 1e-9 and layer.residual_M < 1e-9
    r_u, r_m = blayer.residuals(layer.U, layer.M, layer.grid)
    assert (r_u, r_m) == (layer.residual_U, layer.residual_M)
    assert layer.M > 0
    # depleted near zero, with a slight overshoot before settling at the far field
    assert layer.U[0] < 0.75 * layer.U_far
    assert layer.U.max() < 1.01 * layer.U_far


def test_far_field_and_interpolation(layer):
    assert layer.U_far == pytest.approx(2 / math.pi, abs=1e-8)
    assert layer.at(100.0)[0] == 2 / math.pi
    np.testing.assert_allclose(layer.at(layer.xi[:5]), layer.U[:5], rtol=1e-12)


def test_U_equation_by_adaptive_quadrature(layer):
    # [DERIVED] re-evaluate the right-hand side at a few points with scipy quad on the interpolant
    for xi in (0.3, 1.7, 4.0):
        inner = quad(lambda z: heat_kernel(xi - z, 1.0) * layer.at(z)[0], 0.0, 40.0, limit=200,
                     points=[xi], epsabs=1e-13)[0]
        rhs = inner + layer.M * heat_kernel(xi, 1.0)
        assert layer.at(xi)[0] == pytest.approx(rhs, abs=1e-8)


def test_A_equals_far_field_value(layer):
    # the stationary layer transfers exactly the far-field constant per cycle
    assert blayer.compute_A(layer) == pytest.approx(2 / math.pi, abs=1e-8)
    ref = blayer.refinement_check()
    assert ref["difference"] < 1e-7
    assert ref["M_fine"] == pytest.approx(ref["M_base"], abs=1e-7)


def test_bad_arguments():
    with pytest.raises(ValueError):
        blayer.solve_stationary(x_max=8.0)
    with pytest.raises(ValueError):
        blayer.solve_stationary(tol=0.0)
    with pytest.raises(ConvergenceError) as exc:
        blayer.solve_stationary(max_iter=5)
    assert len(exc.value.history) == 5
