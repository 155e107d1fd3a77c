"""Stationary boundary layer (U, M) near the smallest cluster sizes.

U(xi)  = int_0^inf G(xi - z; 1) U(z) dz + M G(xi; 1),      xi > 0
M / 2  = int_{-inf}^0 dz int_0^inf G(z - xi; 1) U(xi) dxi
U(inf) = 2/pi

U is sampled at composite Gauss-Legendre nodes on [0, xi_max]; beyond
xi_max it is the constant 2/pi and the corresponding integrals are closed
with exact erfc expressions.  The pair is found by iterating the cycle map
from (U = 2/pi, M = 0), which is how the layer builds up in the full system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .semigroup import PanelGrid, first_moment_kernel, half_line_tail, heat_kernel

FAR_FIELD = 2.0 / math.pi


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class BoundaryLayer:
    U: np.ndarray = field(repr=False)
    M: float
    grid: PanelGrid
    residual_U: float
    residual_M: float
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def xi(self) -> np.ndarray:
        return self.grid.nodes_weights()[0]

    def at(self, xi) -> np.ndarray:
        """U at arbitrary points; the far-field constant beyond xi_max."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        inside = self.grid.interpolate(self.U, np.clip(xi, 0.0, self.grid.x_max))
        return np.where(xi > self.grid.x_max, FAR_FIELD, inside)

    @property
    def U_far(self) -> float:
        return float(self.at(self.grid.x_max)[0])


def _operators(grid: PanelGrid):
    xi, w = grid.nodes_weights()
    K = heat_kernel(xi[:, None] - xi[None, :], 1.0) * w[None, :]
    tail_U = FAR_FIELD * 0.5 * erfc((grid.x_max - xi) / 2.0)
    leak = w * half_line_tail(xi, 1.0)
    # int_{xi_max}^inf erfc(z/2)/2 dz = h(xi_max) for the constant far field
    tail_M = FAR_FIELD * float(first_moment_kernel(grid.x_max, 1.0))
    return xi, K, tail_U, leak, tail_M


def residuals(U: np.ndarray, M: float, grid: PanelGrid) -> tuple[float, float]:
    """Max-norm residuals of the two stationary equations."""
    xi, K, tail_U, leak, tail_M = _operators(grid)
    r_u = U - (K @ U + tail_U + M * heat_kernel(xi, 1.0))
    r_m = 0.5 * M - (float(leak @ U) + tail_M)
    return float(np.max(np.abs(r_u))), abs(r_m)


def solve_stationary(x_max: float = 12.0, panel: float = 0.5, order: int = 16, tol: float = 1e-10,
                     max_iter: int = 20000) -> BoundaryLayer:
    """Iterate the cycle map to its fixed point.

    Stops when the max-norm change of (U, M) falls below ``tol``; raises
    ConvergenceError if that does not happen within ``max_iter`` steps or the
    stationary residuals exceed 10 tol.
    """
    if x_max < 12.0:
        raise ValueError("x_max must be at least 12 for the far-field closure")
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = PanelGrid(x_max=x_max, panel=panel, order=order)
    xi, K, tail_U, leak, tail_M = _operators(grid)
    g0 = heat_kernel(xi, 1.0)
    U = np.full(len(xi), FAR_FIELD)
    M = 0.0
    history = []
    for n in range(1, max_iter + 1):
        U_new = K @ U + tail_U + M * g0
        M_new = float(leak @ U) + tail_M + 0.5 * M
        change = max(float(np.max(np.abs(U_new - U))), abs(M_new - M))
        U, M = U_new, M_new
        history.append(change)
        if change < tol:
            break
    else:
        raise ConvergenceError(f"no convergence in {max_iter} iterations (last change {history[-1]:g})",
                               history)
    r_u, r_m = residuals(U, M, grid)
    if max(r_u, r_m) > 10 * tol:
        raise ConvergenceError(f"residuals {r_u:g}, {r_m:g} exceed 10 tol", history)
    return BoundaryLayer(U=U, M=M, grid=grid, residual_U=r_u, residual_M=r_m, iterations=n,
                         history=history)


def a_terms(U_values: np.ndarray, M: float, grid: PanelGrid) -> tuple[float, float]:
    """(int U(xi) h(xi) dxi, M / sqrt(pi)) with h(xi) = int_0^inf y G(y + xi; 1) dy."""
    xi, w = grid.nodes_weights()
    smooth = float(np.dot(w, U_values * first_moment_kernel(xi, 1.0)))
    # far-field part: int_{a}^inf h = int_0^inf y erfc((y + a)/2)/2 dy, below 1e-30 for a >= 12
    return smooth, M / math.sqrt(math.pi)


def compute_A(layer: BoundaryLayer) -> float:
    smooth, dirac = a_terms(layer.U, layer.M, layer.grid)
    return smooth + dirac


def refinement_check(tol: float = 1e-10) -> dict:
    """A on the base grid and on a grid with larger extent and twice the nodes."""
    base = solve_stationary(12.0, 0.5, 16, tol)
    fine = solve_stationary(16.0, 0.25, 16, tol)
    a0, a1 = compute_A(base), compute_A(fine)
    return {"A_base": a0, "A_fine": a1, "difference": abs(a1 - a0), "M_base": base.M, "M_fine": fine.M}
