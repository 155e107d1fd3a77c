"""Unperturbed Lotka-Volterra cycles dv/dt = -vw + eps v, dw/dt = vw - eps w.

A cycle starts on the diagonal v = w > eps and is split by first hitting
times t1 (v = eps), t2 (w = eps), t3 (v = eps), t4 (w = eps), t5 = T (back
on the diagonal), with the intermediate markers t12 (v = eps^1.5 falling),
t23 (v = w below eps) and t34 (w = eps^1.5 rising).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from .core import lv_energy_log
from .integrate import Event, StepperConfig, Trajectory, integrate_log_lv, _gl

LV_CONFIG = StepperConfig(abs_tol=1e-13, rel_tol=1e-12)

STAGES = ("t1", "t12", "t2", "t23", "t3", "t34", "t4", "t5")


class CycleError(RuntimeError):
    pass


def diagonal_start(E: float, epsilon: float) -> float:
    """v(0) = w(0) > eps on the diagonal with energy E.

    Solves E = 2 eps (u - 1 - log u), u = v/eps, which is increasing in u > 1.
    """
    if E <= 0:
        raise CycleError("energy must be positive")

    def g(d):  # u - 1 - log u with d = u - 1, written to avoid cancellation
        return 2.0 * epsilon * (d - math.log1p(d)) - E

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise CycleError("could not bracket the diagonal start")
    lo = 0.0
    try:
        d = brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    except ValueError as exc:
        raise CycleError(str(exc)) from exc
    return epsilon * (1.0 + d)


@dataclass
class CycleRecord:
    E: float
    epsilon: float
    v0: float
    t_stages: dict
    T: float
    Y_max: float
    Y_T: float
    D: float
    mean_v: float
    mean_w: float
    log_v_t2: float
    energy_drift: float
    Y_samples: np.ndarray = field(repr=False, default=None)
    traj: Trajectory | None = field(repr=False, default=None)

    def row(self) -> dict:
        s = self.t_stages
        return {"E": self.E, "eps": self.epsilon, "t1": s["t1"], "t12": s["t12"], "t2": s["t2"],
                "t23": s["t23"], "t3": s["t3"], "t34": s["t34"], "t4": s["t4"], "t5": s["t5"],
                "T": self.T, "Ymax": self.Y_max, "D": self.D, "mean_v": self.mean_v,
                "mean_w": self.mean_w}

    def vw(self, t) -> tuple[np.ndarray, np.ndarray]:
        z = self.traj.sol(t)
        return np.exp(z[0]), np.exp(z[1])


CSV_COLUMNS = ("E", "eps", "t1", "t12", "t2", "t23", "t3", "t34", "t4", "t5", "T", "Ymax", "D",
               "mean_v", "mean_w")


def _stage_events(epsilon: float) -> list[Event]:
    le = math.log(epsilon)
    le32 = 1.5 * le
    return [
        Event("v_eps_down", lambda t, z: z[0] - le, -1),
        Event("w_eps_down", lambda t, z: z[1] - le, -1),
        Event("v_eps_up", lambda t, z: z[0] - le, +1),
        Event("w_eps_up", lambda t, z: z[1] - le, +1),
        Event("v_eps32_down", lambda t, z: z[0] - le32, -1),
        Event("w_eps32_up", lambda t, z: z[1] - le32, +1),
        Event("diag_low", lambda t, z: z[0] - z[1], +1, guard=lambda t, z: z[0] < le),
        Event("diag_high", lambda t, z: z[0] - z[1], -1, guard=lambda t, z: z[0] > le, terminal=True),
    ]


class _StepQuadrature:
    """Gauss-Legendre quadrature of functions of (v, w) on the dense output."""

    def __init__(self, traj: Trajectory, nodes: int = 8):
        self.traj = traj
        self.nodes = nodes
        xg, wg = _gl(nodes)
        t = traj.t
        tm = 0.5 * (t[1:] + t[:-1])
        hr = 0.5 * (t[1:] - t[:-1])
        self.tt = (tm[:, None] + hr[:, None] * xg[None, :])
        self.w = hr[:, None] * wg[None, :]
        z = np.stack([traj.dense[k](self.tt[k]) for k in range(len(traj.dense))], axis=1)
        self.v = np.exp(z[0])
        self.wv = np.exp(z[1])

    def cumulative(self, vals: np.ndarray) -> np.ndarray:
        """Running integral at every step end (first entry 0)."""
        per = np.sum(self.w * vals, axis=1)
        return np.concatenate([[0.0], np.cumsum(per)])

    def upto(self, vals_fn, t: float) -> float:
        """Integral from 0 to t of vals_fn(v, w)."""
        tr = self.traj
        k = int(np.clip(np.searchsorted(tr.t, t, side="right") - 1, 0, len(tr.dense) - 1))
        full = np.sum(self.w[:k] * vals_fn(self.v[:k], self.wv[:k]))
        xg, wg = _gl(self.nodes)
        a, b = tr.t[k], t
        tt = 0.5 * (a + b) + 0.5 * (b - a) * xg
        z = tr.dense[k](tt)
        part = 0.5 * (b - a) * np.dot(wg, vals_fn(np.exp(z[0]), np.exp(z[1])))
        return float(full + part)


def solve_cycle(E: float, epsilon: float, cfg: StepperConfig = LV_CONFIG, quad_nodes: int = 8) -> CycleRecord:
    v0 = diagonal_start(E, epsilon)
    x0 = math.log(v0)
    expected = E / epsilon ** 2 + 2 * math.pi / epsilon + 10.0
    traj = integrate_log_lv(epsilon, x0, x0, (0.0, 10.0 * expected), cfg,
                            events=_stage_events(epsilon), keep_dense=True)
    first = {}
    for hit in traj.events:
        first.setdefault(hit.name, hit.t)
    if "diag_high" not in first:
        raise CycleError(f"cycle did not close within {10 * expected:g}")
    names = {"t1": "v_eps_down", "t2": "w_eps_down", "t3": "v_eps_up", "t4": "w_eps_up",
             "t12": "v_eps32_down", "t23": "diag_low", "t34": "w_eps32_up", "t5": "diag_high"}
    stages = {k: first.get(n, math.nan) for k, n in names.items()}
    main = [stages[k] for k in ("t1", "t2", "t3", "t4", "t5")]
    if not all(a < b for a, b in zip([0.0] + main[:-1], main)):
        raise CycleError(f"stage times out of order: {main}")
    T = stages["t5"]
    q = _StepQuadrature(traj, quad_nodes)
    Iv = q.upto(lambda v, w: v, T)
    Iw = q.upto(lambda v, w: w, T)
    Y_steps = q.cumulative(q.wv - q.v)
    t23 = stages["t23"]
    Y_max = q.upto(lambda v, w: w - v, t23) if math.isfinite(t23) else float(np.max(Y_steps))
    Y_T = Iw - Iv
    log_v_t2 = float(traj.sol(stages["t2"])[0, 0])
    Es = lv_energy_log(traj.y[:, 0], traj.y[:, 1], epsilon)
    drift = float(np.max(np.abs(Es - E)) / E)
    samples = np.column_stack([traj.t, Y_steps])
    return CycleRecord(E=E, epsilon=epsilon, v0=v0, t_stages=stages, T=T, Y_max=Y_max, Y_T=Y_T,
                       D=0.5 * (Iv + Iw), mean_v=Iv / T, mean_w=Iw / T, log_v_t2=log_v_t2,
                       energy_drift=drift, Y_samples=samples, traj=traj)


def integral_between(record: CycleRecord, fn, a: float, b: float, nodes: int = 8) -> float:
    q = _StepQuadrature(record.traj, nodes)
    return q.upto(fn, b) - q.upto(fn, a)


@dataclass
class ScalingReport:
    E: float
    epsilon: float
    dev_T: float
    dev_D: float
    dev_orbit: float


def check_scaling(E: float, epsilon: float, n_samples: int = 4000) -> ScalingReport:
    """Compare the (E, eps) cycle with the rescaled (1, eps/E) cycle."""
    a = solve_cycle(E, epsilon)
    b = solve_cycle(1.0, epsilon / E)
    dev_T = abs(a.T * E / b.T - 1.0)
    dev_D = abs(a.D / b.D - 1.0)
    t = np.linspace(0.0, min(a.T, b.T / E), n_samples)
    va, wa = a.vw(t)
    vb, wb = b.vw(E * t)
    scale = E * max(np.max(vb), np.max(wb))
    dev = max(np.max(np.abs(va - E * vb)), np.max(np.abs(wa - E * wb))) / scale
    return ScalingReport(E, epsilon, dev_T, dev_D, float(dev))


def stage_ratios(rec: CycleRecord) -> dict:
    eps = rec.epsilon
    s = rec.t_stages
    L = math.log(1.0 / eps)
    return {
        "t1": s["t1"] / L,
        "t2-t1": (s["t2"] - s["t1"]) * eps / L,
        "t3-t2": (s["t3"] - s["t2"]) * eps ** 2,
        "t4-t3": (s["t4"] - s["t3"]) * eps / L,
        "t5-t4": (s["t5"] - s["t4"]) / L,
        "t12-t1": (s["t12"] - s["t1"]) / (0.5 * L),
        "T": rec.T * eps ** 2,
        # v(t2) ~ eps e^{-1} e^{-1/eps}; compared as a ratio in log space
        "v_t2": math.exp(rec.log_v_t2 - (math.log(eps) - 1.0 - 1.0 / eps)),
    }


def check_stage_asymptotics(eps_sweep: Iterable[float], E: float = 1.0) -> list[dict]:
    rows = []
    for eps in eps_sweep:
        rec = solve_cycle(E, eps)
        rows.append({"eps": eps, **stage_ratios(rec)})
    return rows


@dataclass
class DisplacementReport:
    Y_max: float
    D: float
    Y_max_eps: float
    D_eps: float
    share_12: float
    share_34: float
    share_outside: float
    Y_increasing_0_t2: bool
    Y_flat_variation_t2_t3: float
    Y_decreasing_t3_t5: bool


def displacement_and_diffusion(rec: CycleRecord, n_samples: int = 2000) -> DisplacementReport:
    s = rec.t_stages
    q = _StepQuadrature(rec.traj)
    half_sum = lambda v, w: 0.5 * (v + w)
    D12 = q.upto(half_sum, s["t2"]) - q.upto(half_sum, s["t1"])
    D34 = q.upto(half_sum, s["t4"]) - q.upto(half_sum, s["t3"])
    diff = lambda v, w: w - v

    def Y_at(ts):
        return np.array([q.upto(diff, t) for t in ts])

    y_a = Y_at(np.linspace(0.0, s["t2"], n_samples // 4))
    y_b = Y_at(np.linspace(s["t2"], s["t3"], n_samples // 4))
    y_c = Y_at(np.linspace(s["t3"], s["t5"], n_samples // 4))
    tol = 1e-9 * rec.Y_max
    return DisplacementReport(
        Y_max=rec.Y_max, D=rec.D, Y_max_eps=rec.Y_max * rec.epsilon, D_eps=rec.D * rec.epsilon,
        share_12=D12 / rec.D, share_34=D34 / rec.D, share_outside=1.0 - (D12 + D34) / rec.D,
        Y_increasing_0_t2=bool(np.all(np.diff(y_a) > -tol)),
        Y_flat_variation_t2_t3=float(np.ptp(y_b) / rec.Y_max),
        Y_decreasing_t3_t5=bool(np.all(np.diff(y_c) < tol)),
    )


def diffusion_total(E: float, epsilon: float) -> float:
    """D(E, eps) = D(1, eps/E) from a solved cycle."""
    return solve_cycle(1.0, epsilon / E).D


def write_cycle_csv(records: Iterable[CycleRecord], path) -> None:
    from .io import write_csv
    write_csv(path, CSV_COLUMNS, [[r.row()[k] for k in CSV_COLUMNS] for r in records])
