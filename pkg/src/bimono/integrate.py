"""Adaptive 8th-order explicit Runge-Kutta driver with event location.

The stepping itself is scipy's Dormand-Prince 8(5,3) pair; this module drives
it one step at a time so that step bounds, budgets, per-step observers and
sign-change event location on the 7th-order dense output are under our
control.  Monomers are integrated in logarithmic variables, which keeps them
strictly positive through the exponentially small lows of each cycle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .core import SimState, SystemParams, full_rhs_log


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float | None = None, y: np.ndarray | None = None):
        super().__init__(message)
        self.t = t
        self.y = y


class StiffnessError(IntegrationError):
    """Step size fell below h_min."""


class BudgetError(IntegrationError):
    """max_steps exhausted."""


class SchemeFailure(IntegrationError):
    """A quantity that must stay nonnegative went below -abs_tol."""


@dataclass(frozen=True)
class StepperConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    h_init: float | None = None
    h_min: float = 0.0
    h_max: float = math.inf
    max_steps: int = 5_000_000
    order: int = 8

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.h_min < 0 or self.h_max <= 0 or self.h_min > self.h_max:
            raise ValueError("need 0 <= h_min <= h_max")
        if self.h_init is not None and not (self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need h_min <= h_init <= h_max")
        if self.order != 8:
            raise ValueError("only the 8th-order pair is provided")

    @classmethod
    def fixed(cls, h: float, max_steps: int = 10_000_000) -> "StepperConfig":
        """Effectively fixed steps: loose tolerances accept every step of size h."""
        return cls(abs_tol=1e30, rel_tol=1e30, h_init=h, h_min=0.0, h_max=h, max_steps=max_steps)


@dataclass
class Event:
    """Zero of ``func(t, y)``; ``direction`` -1 keeps only falling crossings.

    ``guard(t, y)`` filters hits (evaluated at the located root).
    """
    name: str
    func: Callable[[float, np.ndarray], float]
    direction: int = 0
    guard: Callable[[float, np.ndarray], bool] | None = None
    terminal: bool = False


@dataclass
class EventHit:
    name: str
    t: float
    y: np.ndarray = field(repr=False)


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray = field(repr=False)
    events: list[EventHit]
    n_steps: int
    n_fev: int
    dense: list | None = field(default=None, repr=False)
    status: str = "finished"
    n_clamped: int = 0

    def hits(self, name: str) -> list[EventHit]:
        return [e for e in self.events if e.name == name]

    def sol(self, t):
        """Evaluate the dense output (requires ``keep_dense``)."""
        if self.dense is None:
            raise ValueError("trajectory was integrated without dense output")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.dense) - 1)
        out = np.empty((self.y.shape[1], t.size))
        for k in np.unique(idx):
            sel = idx == k
            out[:, sel] = self.dense[k](t[sel])
        return out


def _crossed(g0: float, g1: float, direction: int) -> bool:
    # strict sign change; a touch that stays on one side is not a crossing
    if g0 > 0 and g1 <= 0:
        return direction <= 0
    if g0 < 0 and g1 >= 0:
        return direction >= 0
    return False


def integrate_ode(f, y0, t_span, cfg: StepperConfig = StepperConfig(), events: Sequence[Event] = (),
                  keep_dense: bool = False, record_every: int = 1, on_step=None,
                  event_xtol: float = 1e-12) -> Trajectory:
    """Integrate ``y' = f(t, y)`` over ``t_span``.

    ``on_step(t0, t1, y0, y1, interp)`` is called after every accepted step; it
    may return True to stop.  States are recorded every ``record_every`` steps
    (the final state always).  Raises StiffnessError or BudgetError.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    y0 = np.array(y0, dtype=float)
    solver = DOP853(f, t0, y0, t1, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.h_max, first_step=cfg.h_init)
    ts, ys = [t0], [y0.copy()]
    dense = [] if keep_dense else None
    hits: list[EventHit] = []
    g_prev = [ev.func(t0, y0) for ev in events]
    n = 0
    status = "finished"
    while solver.status == "running":
        t_old, y_old = solver.t, solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"step rejected at t={t_old}: {msg}", t_old, y_old)
        n += 1
        h = solver.t - t_old
        if h < cfg.h_min and solver.status == "running":
            raise StiffnessError(f"step {h:g} below h_min at t={solver.t}", solver.t, solver.y.copy())
        interp = solver.dense_output() if (keep_dense or events or on_step) else None
        if keep_dense:
            dense.append(interp)
        stop = False
        found = []
        for k, ev in enumerate(events):
            g_new = ev.func(solver.t, solver.y)
            if _crossed(g_prev[k], g_new, ev.direction):
                fun = lambda s, ev=ev: ev.func(s, interp(s))
                if g_prev[k] == 0.0 or g_new == 0.0:
                    tr = t_old if g_prev[k] == 0.0 else solver.t
                else:
                    tr = brentq(fun, t_old, solver.t, xtol=event_xtol, rtol=1e-15)
                yr = interp(tr)
                if ev.guard is None or ev.guard(tr, yr):
                    found.append(EventHit(ev.name, tr, yr))
                    stop = stop or ev.terminal
            g_prev[k] = g_new
        found.sort(key=lambda e: e.t)
        hits.extend(found)
        if on_step is not None and on_step(t_old, solver.t, y_old, solver.y, interp):
            stop = True
        if n % record_every == 0 or solver.status != "running" or stop:
            ts.append(solver.t)
            ys.append(solver.y.copy())
        if stop:
            status = "stopped"
            break
        if n >= cfg.max_steps and solver.status == "running":
            raise BudgetError(f"max_steps={cfg.max_steps} exhausted at t={solver.t}", solver.t,
                              solver.y.copy())
    return Trajectory(t=np.array(ts), y=np.array(ys), events=hits, n_steps=n, n_fev=solver.nfev,
                      dense=dense, status=status)


def lv_log_rhs(epsilon: float):
    """dx/dt = eps - e^y, dy/dt = e^x - eps for x = log v, y = log w."""
    def f(t, z):
        # trial stages of rejected steps may wander far; cap to avoid overflow
        return np.array([epsilon - math.exp(min(z[1], 50.0)), math.exp(min(z[0], 50.0)) - epsilon])
    return f


def lv_rhs(epsilon: float):
    def f(t, z):
        v, w = z
        return np.array([-v * w + v * epsilon, v * w - epsilon * w])
    return f


def integrate_log_lv(epsilon: float, x0: float, y0: float, t_span, cfg: StepperConfig = StepperConfig(),
                     events: Sequence[Event] = (), keep_dense: bool = True, **kw) -> Trajectory:
    return integrate_ode(lv_log_rhs(epsilon), [x0, y0], t_span, cfg, events=events,
                         keep_dense=keep_dense, **kw)


def pack_log_state(state: SimState) -> np.ndarray:
    if state.v <= 0 or state.w <= 0:
        raise ValueError("log variables need v > 0 and w > 0")
    return np.concatenate([[math.log(state.v), math.log(state.w)], state.c])


def unpack_log_state(t: float, y: np.ndarray) -> SimState:
    return SimState(t=t, v=math.exp(y[0]), w=math.exp(y[1]), c=y[2:])


def integrate_log_full(params: SystemParams, state0: SimState, t_span, cfg: StepperConfig | None = None,
                       events: Sequence[Event] = (), on_step=None, record_every: int = 1,
                       keep_dense: bool = False) -> Trajectory:
    """Full truncated system with monomers in log variables.

    Cluster entries are checked after every step: values below
    -params.abs_tol abort with SchemeFailure; smaller negative values are counted in
    ``Trajectory.n_clamped`` but left untouched so that the cluster number
    stays an exact invariant of the discrete map.
    """
    if cfg is None:
        cfg = StepperConfig(abs_tol=params.abs_tol, rel_tol=params.rel_tol)
    if len(state0.c) != params.n_max:
        raise ValueError(f"state has {len(state0.c)} clusters, params expect {params.n_max}")
    if np.any(state0.c < 0):
        raise ValueError("initial cluster concentrations must be nonnegative")
    counter = [0]

    def watch(t0, t1, y0, y1, interp):
        cmin = y1[2:].min()
        if cmin < 0:
            if cmin < -params.abs_tol:
                raise SchemeFailure(f"c_j = {cmin:g} < -abs_tol at t={t1}", t1, y1.copy())
            counter[0] += int(np.count_nonzero(y1[2:] < 0))
        return bool(on_step(t0, t1, y0, y1, interp)) if on_step is not None else False

    traj = integrate_ode(full_rhs_log, pack_log_state(state0), t_span, cfg, events=events,
                         on_step=watch, record_every=record_every, keep_dense=keep_dense)
    traj.n_clamped = counter[0]
    return traj


def gauss_legendre_on_step(interp, t0: float, t1: float, integrand, nodes: int = 8):
    """Integrate ``integrand(t, y)`` over one step using the dense interpolant."""
    xg, wg = _gl(nodes)
    tm, hr = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
    tt = tm + hr * xg
    vals = integrand(tt, interp(tt))
    return hr * float(np.dot(wg, vals))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]
