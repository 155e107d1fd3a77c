import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bimono import core
from bimono.core import DomainError, SimState, SystemParams

positive = st.floats(1e-3, 2.0, allow_nan=False)
cluster_vec = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=40)


def _steady_oracle(eps):
    """theta from the unit-mass condition for the geometric profile, in 50 digits."""
    mp.mp.dps = 50
    e = mp.mpf(eps)
    # mass of geometric profile with c1 = eps theta: sum j c_j = eps/theta
    # total mass 1 = v + w + eps/theta = eps + eps(1 - theta) + eps/theta
    f = lambda th: e + e * (1 - th) + e / th - 1
    th = mp.findroot(f, (mp.mpf(eps) * 0.5, mp.mpf(0.999)), solver="anderson")
    return th


@pytest.mark.parametrize("eps", [0.3, 0.1, 0.02, 1e-3, 1e-6])
def test_theta_matches_high_precision_root(eps):
    # [DERIVED] root of the mass condition solved independently in 50 digits
    th = _steady_oracle(eps)
    assert core.steady_theta(eps) == pytest.approx(float(th), rel=1e-13)


def test_theta_small_eps_asymptotics():
    # [PAPER] theta ~ eps as eps -> 0
    for eps in (1e-4, 1e-6, 1e-8):
        assert core.steady_theta(eps) / eps == pytest.approx(1.0, rel=5 * eps)


@pytest.mark.parametrize("eps", [0.02, 0.01, 0.005, 1e-3])
def test_steady_energy_close_to_half_eps_cubed(eps):
    # [PAPER] E_bar ~ eps^3 / 2
    ss = core.steady_state(SystemParams(eps))
    assert ss.e_bar / (eps ** 3 / 2) == pytest.approx(1.0, abs=6 * eps)
    # [DERIVED] direct energy of (v_bar, w_bar) in high precision
    mp.mp.dps = 40
    v, w = mp.mpf(ss.v_bar), mp.mpf(ss.w_bar)
    e = v + w - 2 * eps - eps * mp.log(v * w / mp.mpf(eps) ** 2)
    assert ss.e_bar == pytest.approx(float(e), rel=1e-9)


@pytest.mark.parametrize("eps", [0.1, 0.02, 0.003])
def test_steady_state_solves_untruncated_equations(eps):
    ss = core.steady_state(SystemParams(eps))
    assert np.max(np.abs(core.infinite_steady_residual(ss))) < 1e-15
    assert core.fsum(ss.c_bar) == pytest.approx(eps, rel=1e-8)  # truncation tail is exp(-20)
    assert ss.v_bar == eps and ss.w_bar == pytest.approx(eps * (1 - ss.theta))


def test_geometric_profile_has_zero_flux_in_truncated_chain():
    # [DERIVED] w c_j = v c_{j+1} for every j, so the closure J_N = 0 changes nothing
    ss = core.steady_state(SystemParams(0.05, n_max=60))
    res = core.truncated_steady_residual(ss)
    assert np.max(np.abs(res)) < 1e-18


@pytest.mark.parametrize("bad", [0.0, -0.1, 0.5, 0.7])
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        SystemParams(bad)
    with pytest.raises(DomainError):
        core.steady_theta(bad)


def test_energy_requires_positive_monomers():
    with pytest.raises(DomainError):
        core.lv_energy(0.0, 0.1, 0.01)
    with pytest.raises(DomainError):
        SystemParams(0.1, n_max=1)


@given(v=positive, w=positive, eps=st.floats(1e-3, 0.4))
def test_energy_nonnegative_and_log_form_agrees(v, w, eps):
    # [TRIVIAL] E >= 0 with equality only at v = w = eps
    e = core.lv_energy(v, w, eps)
    assert e >= -1e-15
    assert core.lv_energy_log(math.log(v), math.log(w), eps) == pytest.approx(e, rel=1e-9, abs=1e-15)


@given(v=positive, w=positive, c=cluster_vec)
def test_cluster_rhs_conserves_number_and_mass(v, w, c):
    # [DERIVED] telescoping fluxes: sum dc = 0 and d/dt(v + w + sum j c) = 0
    c = np.array(c)
    y = np.concatenate([[v, w], c])
    dy = core.full_rhs(0.0, y)
    j = np.arange(1, len(c) + 1)
    scale = 1 + v * w + (v + w) * c.sum() * len(c)
    assert abs(dy[2:].sum()) <= 1e-13 * scale
    assert abs(dy[0] + dy[1] + (j * dy[2:]).sum()) <= 1e-12 * scale


@given(v=positive, w=positive, c=cluster_vec)
def test_log_rhs_matches_natural_rhs(v, w, c):
    c = np.array(c)
    nat = core.full_rhs(0.0, np.concatenate([[v, w], c]))
    log = core.full_rhs_log(0.0, np.concatenate([[math.log(v), math.log(w)], c]))
    np.testing.assert_allclose(log[:2], nat[:2] / np.array([v, w]), rtol=1e-12,
                               atol=1e-14 * (1 + v + w + c.sum()))
    np.testing.assert_allclose(log[2:], nat[2:], rtol=1e-13, atol=1e-15 * (1 + v + w))


@given(v=positive, w=positive, c=cluster_vec)
def test_energy_rate_identity(v, w, c):
    # [DERIVED] dE/dt = (eps - v) c1 + (w - eps) c_N for the truncated closure
    c = np.array(c)
    eps = c.sum()
    if eps <= 1e-6:
        return
    dy = core.full_rhs(0.0, np.concatenate([[v, w], c]))
    dE = dy[0] * (1 - eps / v) + dy[1] * (1 - eps / w)  # eps is constant along the flow
    expected = (eps - v) * c[0] + (w - eps) * c[-1]
    assert dE == pytest.approx(expected, rel=1e-9, abs=1e-12 * (1 + v + w))


def test_fluxes_and_length():
    c = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(core.fluxes(2.0, 1.0, c), [1 - 4, 2 - 6])
    assert core.characteristic_length(c) == pytest.approx(14 / 6)
    s = SimState(0.0, 0.2, 0.3, c)
    assert core.total_mass(s) == pytest.approx(0.5 + 14)
    with pytest.raises(DomainError):
        SimState(0.0, 0.1, 0.1, np.ones((2, 2)))
    with pytest.raises(DomainError):
        SimState(0.0, 0.1, 0.1, [-1.0, 0.0]).validate()


@settings(max_examples=50)
@given(st.lists(st.floats(-1e10, 1e10), min_size=1, max_size=50))
def test_fsum_is_exactly_rounded(xs):
    assert core.fsum(xs) == math.fsum(xs)
