"""Domain types, invariants and closed-form steady states of the bi-monomeric
Becker-Döring system

    dv/dt = -v w + v * sum_{j>=2} c_j
    dw/dt =  v w - w * sum_{j>=1} c_j
    dc_j/dt = J_{j-1} - J_j,   J_j = w c_j - v c_{j+1},   J_0 = 0.

The cluster number eps = sum c_j and the mass M = v + w + sum j c_j are
conserved.  Truncated systems close the chain with J_{n_max} = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a formula."""


def fsum(values) -> float:
    """Compensated sum of an array-like (exactly rounded)."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def default_n_max(epsilon: float) -> int:
    """Truncation size with geometric tail exp(-20) below the steady profile."""
    return max(500, int(math.ceil(20.0 / epsilon)))


@dataclass(frozen=True)
class SystemParams:
    epsilon: float
    total_mass: float = 1.0
    n_max: int | None = None
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.epsilon < 0.5):
            raise DomainError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if self.total_mass <= 0:
            raise DomainError("total_mass must be positive")
        if self.n_max is None:
            object.__setattr__(self, "n_max", default_n_max(self.epsilon))
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise DomainError("n_max must be an integer >= 2")
        object.__setattr__(self, "n_max", int(self.n_max))
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise DomainError("tolerances must be positive")


@dataclass
class SimState:
    t: float
    v: float
    w: float
    c: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).copy()
        if self.c.ndim != 1:
            raise DomainError("c must be one-dimensional")

    def validate(self, tol: float = 0.0) -> None:
        if self.v < 0 or self.w < 0 or np.any(self.c < -tol):
            raise DomainError("state has negative entries")
        if not (np.isfinite(self.v) and np.isfinite(self.w) and np.all(np.isfinite(self.c))):
            raise DomainError("state has non-finite entries")

    def copy(self) -> "SimState":
        return replace(self, c=self.c.copy())


@dataclass(frozen=True)
class SteadyState:
    theta: float
    c_bar: np.ndarray = field(repr=False)
    v_bar: float
    w_bar: float
    e_bar: float
    epsilon: float


def cluster_number(state: SimState) -> float:
    return fsum(state.c)


def first_moment(c: np.ndarray) -> float:
    j = np.arange(1, len(c) + 1, dtype=float)
    return fsum(j * c)


def total_mass(state: SimState) -> float:
    j = np.arange(1, len(state.c) + 1, dtype=float)
    return math.fsum([state.v, state.w, *(j * state.c).tolist()])


def characteristic_length(c: np.ndarray) -> float:
    """Mean cluster size sum(j c_j)/sum(c_j)."""
    return first_moment(c) / fsum(c)


def lv_energy(v, w, epsilon):
    """Lotka-Volterra energy v + w - 2 eps - eps log(v w / eps^2)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(v <= 0) or np.any(w <= 0):
        raise DomainError("lv_energy needs v > 0 and w > 0")
    e = (v - epsilon) + (w - epsilon) - epsilon * (np.log(v / epsilon) + np.log(w / epsilon))
    return float(e) if e.ndim == 0 else e


def lv_energy_log(x, y, epsilon):
    """Energy from logarithmic monomer variables x = log v, y = log w.

    Never exponentiates a large negative argument into a difference, so it
    stays accurate when v or w underflow.
    """
    le = math.log(epsilon)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = (np.exp(x) - epsilon) + (np.exp(y) - epsilon) - epsilon * ((x - le) + (y - le))
    return float(e) if e.ndim == 0 else e


def steady_theta(epsilon: float) -> float:
    """Geometric-profile parameter of the positive steady state.

    Uses the cancellation-free form 4 eps (sqrt(q) + 2 eps) / (1 + sqrt(q))^2,
    q = (1 - 2 eps)^2 + 4 eps^2, algebraically equal to the textbook root.
    """
    if not (0.0 < epsilon < 0.5):
        raise DomainError("a positive steady state needs 0 < epsilon < 1/2")
    sq = math.sqrt((1.0 - 2.0 * epsilon) ** 2 + 4.0 * epsilon ** 2)
    return 4.0 * epsilon * (sq + 2.0 * epsilon) / (1.0 + sq) ** 2


def steady_state(params: SystemParams) -> SteadyState:
    eps = params.epsilon
    theta = steady_theta(eps)
    c1 = eps * theta
    i = np.arange(params.n_max, dtype=float)
    c_bar = c1 * np.exp(i * math.log1p(-theta))
    e_bar = eps * (-theta - math.log1p(-theta))
    return SteadyState(theta=theta, c_bar=c_bar, v_bar=eps, w_bar=eps - c1, e_bar=e_bar,
                       epsilon=eps)


def fluxes(v: float, w: float, c: np.ndarray) -> np.ndarray:
    """J_1 .. J_{N-1}; the closing flux J_N is zero."""
    return w * c[:-1] - v * c[1:]


def cluster_rhs(v: float, w: float, c: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    J = fluxes(v, w, c)
    dc = np.empty_like(c) if out is None else out
    dc[0] = -J[0]
    dc[1:-1] = J[:-1] - J[1:]
    dc[-1] = J[-1]
    return dc


def full_rhs(t: float, y: np.ndarray) -> np.ndarray:
    """Truncated system in natural variables y = (v, w, c_1..c_N).

    The w equation uses sum_{j<N} c_j so that the mass is an exact invariant
    of the truncated system.
    """
    v, w, c = y[0], y[1], y[2:]
    s = c.sum()
    out = np.empty_like(y)
    out[0] = v * (-w + s - c[0])
    out[1] = w * (v - (s - c[-1]))
    cluster_rhs(v, w, c, out[2:])
    return out


def full_rhs_log(t: float, y: np.ndarray) -> np.ndarray:
    """Truncated system with y = (log v, log w, c_1..c_N)."""
    v, w, c = math.exp(min(y[0], 50.0)), math.exp(min(y[1], 50.0)), y[2:]
    s = c.sum()
    out = np.empty_like(y)
    out[0] = -w + s - c[0]
    out[1] = v - (s - c[-1])
    cluster_rhs(v, w, c, out[2:])
    return out


def infinite_steady_residual(ss: SteadyState) -> np.ndarray:
    """Residuals of the untruncated equations at the steady state.

    Tail sums of the geometric profile are evaluated in closed form, so this
    checks the steady state of the infinite system rather than its truncation.
    """
    eps, v, w, c = ss.epsilon, ss.v_bar, ss.w_bar, ss.c_bar
    tail_from_2 = eps - c[0]
    dv = -v * w + v * tail_from_2
    dw = v * w - w * eps
    J = w * c - v * c * (1.0 - ss.theta)  # J_j for j = 1..N with c_{j+1} = (1-theta) c_j
    dc = np.empty_like(c)
    dc[0] = -J[0]
    dc[1:] = J[:-1] - J[1:]
    return np.concatenate([[dv, dw], dc])


def truncated_steady_residual(ss: SteadyState) -> np.ndarray:
    """dc_j/dt of the truncated chain at the steady profile."""
    return cluster_rhs(ss.v_bar, ss.w_bar, ss.c_bar)


def state_energy(state: SimState) -> float:
    return lv_energy(state.v, state.w, cluster_number(state))
