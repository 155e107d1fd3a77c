"""Linear stability of the positive steady state.

With c_j = c̄_j (1 + phi_j), v = v̄ (1 + V), w = w̄ (1 + W) and tau = eps t the
linearisation reads

    lambda V     = -(1 - theta) W - theta phi_1
    lambda W     = V
    lambda phi_1 = -(1 - theta)(W + phi_1 - V - phi_2)
    lambda phi_j = (phi_{j-1} - phi_j + W - V) - (1 - theta)(phi_j - phi_{j+1} + W - V).

At theta = 0 it has the pair lambda = ±i (the LV oscillation) and the band
2(cos beta - 1) of the discrete heat equation; the pair moves to
i + theta lambda_1 with Re(lambda_1) < 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SimState, SystemParams, steady_state, steady_theta
from .integrate import StepperConfig, integrate_log_full


class LinearRegimeError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearizedSpectrum:
    lambda0_pair: tuple[complex, complex]
    r: complex
    lambda1: complex
    continuous_band: np.ndarray = field(repr=False)
    eigvec_profile: np.ndarray = field(repr=False)


def recurrence_root() -> complex:
    """r = 1 + i/2 - sqrt(i - 1/4), the root of r^2 - (2 + i) r + 1 = 0 inside the unit disc."""
    return complex(1.0, 0.5) - np.sqrt(complex(-0.25, 1.0))


def oscillatory_mode(j_max: int = 60) -> tuple[complex, np.ndarray, complex]:
    """(r, phi_{j,0} for j = 1..j_max, lambda_1) for the eigenvalue lambda_0 = i with V0 = 1, W0 = -i."""
    r = recurrence_root()
    j = np.arange(1, j_max + 1)
    phi = (1 + 1j) / (1 - r) * r ** j
    lam1 = -0.5 * (1j + (1 + 1j) * r / (1 - r))
    if not lam1.real < 0:
        raise ArithmeticError("first-order correction does not damp the oscillation")
    return r, phi, lam1


def linear_matrix(theta: float, N: int) -> np.ndarray:
    """Generator of the linearised system on (V, W, phi_1..phi_N) with phi_{N+1} = 0."""
    n = N + 2
    A = np.zeros((n, n))
    q = 1.0 - theta
    A[0, 1] = -q
    A[0, 2] = -theta
    A[1, 0] = 1.0
    # phi_1
    A[2, 1] -= q
    A[2, 2] -= q
    A[2, 0] += q
    if N > 1:
        A[2, 3] += q
    for j in range(2, N + 1):
        i = j + 1
        A[i, i - 1] += 1.0
        A[i, i] -= 1.0 + q
        if j < N:
            A[i, i + 1] += q
        A[i, 1] += 1.0 - q
        A[i, 0] -= 1.0 - q
    return A


def eigen_residual(theta: float, N: int = 200) -> dict:
    """How well i + theta lambda_1 approximates the eigenvalue of the truncated system.

    ``sigma_min`` is the smallest singular value of A - (i + theta lambda_1) I,
    ``eig_error`` the distance to the nearest computed eigenvalue; both are
    O(theta^2) when lambda_1 is the correct first-order term.
    """
    _, _, lam1 = oscillatory_mode()
    A = linear_matrix(theta, N)
    lam = 1j + theta * lam1
    smin = float(np.linalg.svd(A - lam * np.eye(len(A)), compute_uv=False)[-1])
    ev = np.linalg.eigvals(A)
    nearest = ev[np.argmin(np.abs(ev - lam))]
    return {"theta": theta, "sigma_min": smin, "eig_error": float(abs(nearest - lam)),
            "eigenvalue": complex(nearest), "prediction": complex(lam)}


def zeroth_order_residual(theta: float, N: int = 200) -> float:
    """Max-norm residual of the theta = 0 eigenvector with lambda = i + theta lambda_1 in the theta system."""
    r, phi, lam1 = oscillatory_mode(N)
    x = np.concatenate([[1.0, -1j], phi])
    A = linear_matrix(theta, N)
    lam = 1j + theta * lam1
    return float(np.max(np.abs(A @ x - lam * x)))


def continuous_spectrum(beta_grid, j_max: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Band values 2(cos beta - 1) and the max recurrence residual of the generalised eigenvectors."""
    beta = np.asarray(beta_grid, dtype=float)
    if np.any(beta < 0) or np.any(beta >= 2 * math.pi):
        raise ValueError("beta must lie in [0, 2 pi)")
    lam = 2.0 * (np.cos(beta) - 1.0)
    res = np.empty_like(beta)
    for k, (b, l) in enumerate(zip(beta, lam)):
        phi = band_eigenvector(b, j_max)
        ext = np.append(phi, band_eigenvector(b, j_max + 1)[-1])
        r1 = l * ext[0] - (ext[1] - ext[0])
        rj = l * ext[1:-1] - (ext[:-2] - 2 * ext[1:-1] + ext[2:])
        res[k] = max(abs(r1), float(np.max(np.abs(rj))))
    return lam, res


def band_eigenvector(beta: float, j_max: int) -> np.ndarray:
    """phi_j = r_+^(j-1) - (1 - r_-)/(1 - r_+) r_-^(j-1), r_± = e^(±i beta); constant at beta = 0."""
    j = np.arange(j_max)
    if abs(math.sin(beta / 2)) < 1e-12:
        return np.ones(j_max, dtype=complex)
    rp, rm = np.exp(1j * beta), np.exp(-1j * beta)
    return rp ** j - (1 - rm) / (1 - rp) * rm ** j


def linearized_spectrum(n_beta: int = 256) -> LinearizedSpectrum:
    r, phi, lam1 = oscillatory_mode()
    band, _ = continuous_spectrum(np.linspace(0.0, 2 * math.pi, n_beta, endpoint=False))
    return LinearizedSpectrum(lambda0_pair=(1j, -1j), r=r, lambda1=lam1, continuous_band=band,
                              eigvec_profile=phi)


def first_order_abscissa(theta: float, n_beta: int = 1024) -> dict:
    """Largest real part of the first-order spectrum: i + theta lambda_1 and its conjugate,
    and the band 2(cos beta - 1) shifted by theta Re(lambda_1)."""
    _, _, lam1 = oscillatory_mode()
    band, _ = continuous_spectrum(np.linspace(0.0, 2 * math.pi, n_beta, endpoint=False))
    discrete = theta * lam1.real
    shifted = float(np.max(band + theta * lam1.real))
    return {"discrete": discrete, "band": shifted, "max": max(discrete, shifted)}


def truncated_abscissa(theta: float, N: int = 300) -> float:
    """Largest real part among eigenvalues of the chain truncated at N.

    Near beta = 0 the truncation produces a real eigenvalue of size O(N^-2)
    or smaller on either side of zero; it is reported, not asserted.
    """
    return float(np.max(np.linalg.eigvals(linear_matrix(theta, N)).real))


# ---------------------------------------------------------------- full-system check

@dataclass
class DampingReport:
    epsilon: float
    theta: float
    frequency: float
    decay_rate: float
    decay_time: float
    predicted_rate: float
    peaks_t: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    max_relative_deviation: float = 0.0

    @property
    def decay_time_over_inv_eps2(self) -> float:
        return self.decay_time * self.epsilon ** 2


def perturbed_steady_state(params: SystemParams, size: float) -> SimState:
    """Steady state displaced by ``size`` times the real part of the oscillatory eigenvector."""
    ss = steady_state(params)
    _, phi, _ = oscillatory_mode(params.n_max)
    c = ss.c_bar * (1.0 + size * phi.real)
    # Re(V0) = 1, Re(W0) = Re(-i) = 0
    return SimState(0.0, ss.v_bar * (1.0 + size), ss.w_bar, c)


def verify_damping_timescale(epsilon: float, size: float = 1e-3, n_periods: float | None = None,
                             n_max: int | None = None) -> DampingReport:
    """Run the full system from a perturbed steady state and fit the oscillation envelope of v.

    The prediction for the decay rate in t is eps theta |Re lambda_1|.
    """
    if epsilon > 0.05:
        raise ValueError("verify_damping_timescale needs eps <= 0.05")
    params = SystemParams(epsilon, n_max=n_max)
    theta = steady_theta(epsilon)
    _, _, lam1 = oscillatory_mode()
    predicted = epsilon * theta * abs(lam1.real)
    ss = steady_state(params)
    if size == 0.0:
        return DampingReport(epsilon, theta, 0.0, 0.0, math.inf, predicted, np.array([]), np.array([]))
    state0 = perturbed_steady_state(params, size)
    period = 2 * math.pi / epsilon
    if n_periods is None:
        n_periods = 3.0 / (predicted * period)
    t_end = n_periods * period
    cfg = StepperConfig(abs_tol=1e-14, rel_tol=1e-11, h_max=period / 40)
    traj = integrate_log_full(params, state0, (0.0, t_end), cfg)
    t = traj.t
    v = np.exp(traj.y[:, 0])
    dev = np.abs(v / ss.v_bar - 1.0)
    if dev.max() > 0.1:
        raise LinearRegimeError(f"relative deviation {dev.max():.3g} left the linear regime")
    # envelope from successive extrema of v about its late-time mean
    vm = v - np.mean(v[t > 0.5 * t_end])
    s = np.sign(np.diff(vm))
    idx = np.where(s[:-1] != s[1:])[0] + 1
    ext_t, ext_v = t[idx], np.abs(vm[idx])
    half = len(ext_t) // 10
    sel = slice(half, None)
    rate = -float(np.polyfit(ext_t[sel], np.log(ext_v[sel]), 1)[0])
    spacing = np.diff(ext_t)
    freq = math.pi / float(np.median(spacing))
    return DampingReport(epsilon=epsilon, theta=theta, frequency=freq, decay_rate=rate,
                         decay_time=1.0 / rate, predicted_rate=predicted, peaks_t=ext_t, amplitudes=ext_v,
                         max_relative_deviation=float(dev.max()))
