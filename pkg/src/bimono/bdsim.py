"""Multi-cycle runs of the full truncated system with per-cycle observables.

A cycle starts whenever w overtakes v on the diagonal v = w > eps.  Along
the run the energy change of each cycle is accumulated by Gauss-Legendre
quadrature of dE/dt = (eps - v) c_1 + (w - eps) c_N on the dense output, so
it can be compared with the direct difference of E at the cycle ends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import (SimState, SystemParams, characteristic_length, cluster_number, fsum, lv_energy_log,
                   steady_state, total_mass)
from .integrate import (Event, StepperConfig, Trajectory, _gl, integrate_log_full, pack_log_state,
                        unpack_log_state)

PHASES = ("I", "II", "III", "IV")
BD_CONFIG = StepperConfig(abs_tol=1e-13, rel_tol=1e-11)


class ConservationError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


# ------------------------------------------------------------------ observables

@dataclass
class CycleObservables:
    n: int
    t_start: float
    t_end: float
    E_n: float
    T_n: float
    L_n: float
    m_n: float
    c1_max: float
    dE_n: float
    dE_quad: float
    E_centred: float
    burst_fraction: float

    def row(self) -> dict:
        return dict(self.__dict__)


CYCLE_COLUMNS = tuple(CycleObservables.__dataclass_fields__)


def small_cluster_fraction(c: np.ndarray, E: float, epsilon: float) -> float:
    """Share of clusters with j <= max(3, ceil(0.1 sqrt(E/eps)))."""
    j_cut = max(3, int(math.ceil(0.1 * math.sqrt(max(E, 0.0) / epsilon))))
    return fsum(c[:j_cut]) / epsilon


def centred_energy(v: float, w: float, v_bar: float, w_bar: float, epsilon: float) -> float:
    """eps [phi(v/v_bar) + phi(w/w_bar)], phi(u) = u - 1 - log u: zero exactly at the steady state."""
    a, b = v / v_bar, w / w_bar
    return epsilon * ((a - 1.0 - math.log(a)) + (b - 1.0 - math.log(b)))


def _energy(y: np.ndarray, epsilon: float) -> float:
    return lv_energy_log(y[0], y[1], epsilon)


def _energy_rate(y: np.ndarray, epsilon: float) -> np.ndarray:
    """(eps - v) c_1 + (w - eps) c_N for a batch of states (columns)."""
    v, w = np.exp(y[0]), np.exp(y[1])
    return (epsilon - v) * y[2] + (w - epsilon) * y[-1]


# ------------------------------------------------------------------ presets

def section3_state(epsilon: float = 0.02, L0: float | None = None) -> tuple[SystemParams, SimState]:
    """c_j proportional to psi(j/L0), Sigma c = eps, v = w sharing the rest of a unit mass."""
    if L0 is None:
        L0 = 1.0 / math.sqrt(epsilon)
    if not 1.0 <= L0 < 1.0 / epsilon:
        raise ValueError("L0 must lie in [1, 1/eps)")
    params = SystemParams(epsilon)
    j = np.arange(1, params.n_max + 1, dtype=float)
    c = np.exp(-(j / L0) ** 2 / math.pi)
    c *= epsilon / fsum(c)
    rest = 1.0 - fsum(j * c)
    return params, SimState(0.0, rest / 2, rest / 2, c)


def gaussian_grid_number(mu: float = 0.02, sigma: float = 10.0, dj: float = 0.5) -> float:
    """dj * sum_{k>=0} c0(k dj) for c0(x) = mu sqrt(2/(pi sigma)) exp(-x^2/(2 sigma))."""
    x = dj * np.arange(int(40 * math.sqrt(sigma) / dj) + 1)
    return dj * fsum(mu * math.sqrt(2 / (math.pi * sigma)) * np.exp(-x ** 2 / (2 * sigma)))


def paper_phase1_state(v0: float = 0.6, mu: float = 0.02, sigma: float = 10.0,
                       dj: float = 0.5) -> tuple[SystemParams, SimState]:
    """Gaussian half profile exp(-j^2/(2 sigma)) rescaled to the cluster number of the
    continuum run on a grid of spacing dj, with v = w = v0."""
    eps = gaussian_grid_number(mu, sigma, dj)
    n = SystemParams(eps).n_max
    j = np.arange(1, n + 1, dtype=float)
    c = np.exp(-j ** 2 / (2 * sigma))
    c *= eps / fsum(c)
    mass = math.fsum([v0, v0, fsum(j * c)])
    params = SystemParams(eps, total_mass=mass, n_max=n)
    return params, SimState(0.0, v0, v0, c)


def dirac_state(epsilon: float = 0.005, a: float = 0.5) -> tuple[SystemParams, SimState]:
    """All clusters at R = round(a/eps), v = w = (1 - eps R)/2."""
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    params = SystemParams(epsilon)
    R = max(1, int(round(a / epsilon)))
    if R > params.n_max:
        raise ValueError("R exceeds n_max")
    c = np.zeros(params.n_max)
    c[R - 1] = epsilon
    rest = 1.0 - epsilon * R
    return params, SimState(0.0, rest / 2, rest / 2, c)


def truncated_steady(epsilon: float, n_max: int, total_mass: float = 1.0) -> tuple[float, float, np.ndarray]:
    """Exact rest point of the chain truncated at n_max with sum c = eps and the given mass.

    Geometric c_j = c_1 r^(j-1), r = 1 - theta, v = eps - c_N, w = eps - c_1
    (then w = r v holds for every theta); theta is fixed by the mass.  Differs
    from the infinite-chain profile by about exp(-theta n_max).
    """
    from .core import steady_theta

    j = np.arange(1, n_max + 1, dtype=float)

    def parts(theta):
        c1 = epsilon * theta / -math.expm1(n_max * math.log1p(-theta))
        c = c1 * np.exp((j - 1) * math.log1p(-theta))
        return epsilon - c[-1], epsilon - c[0], c

    def mass_gap(theta):
        v, w, c = parts(theta)
        return v + w + float(np.dot(j, c)) - total_mass

    t0 = steady_theta(epsilon) if total_mass == 1.0 else 2 * epsilon / total_mass
    theta = brentq(mass_gap, 0.5 * t0, min(2.0 * t0, 0.999), xtol=1e-17, rtol=1e-15)
    return parts(theta)


def steady_initial(epsilon: float = 0.02) -> tuple[SystemParams, SimState]:
    probe = SystemParams(epsilon)
    v, w, c = truncated_steady(epsilon, probe.n_max)
    eps = fsum(c)
    j = np.arange(1, probe.n_max + 1, dtype=float)
    params = SystemParams(eps, total_mass=math.fsum([v, w, fsum(j * c)]), n_max=probe.n_max)
    return params, SimState(0.0, v, w, c)


def phase3_linear_state(epsilon: float = 0.01, Etilde: float = 0.25) -> tuple[SystemParams, SimState]:
    """Steady cluster profile with (v, w) on the diagonal at energy eps * Etilde."""
    from .lv import diagonal_start

    probe = SystemParams(epsilon)
    _, _, c = truncated_steady(epsilon, probe.n_max)
    eps = fsum(c)
    v = diagonal_start(Etilde * eps, eps)
    j = np.arange(1, probe.n_max + 1, dtype=float)
    params = SystemParams(eps, total_mass=math.fsum([v, v, fsum(j * c)]), n_max=probe.n_max)
    return params, SimState(0.0, v, v, c)


PRESETS = {
    "section3": section3_state,
    "paper-phase1": paper_phase1_state,
    "dirac": dirac_state,
    "steady": steady_initial,
    "phase3-linear": phase3_linear_state,
}


def initial_state(preset: str, **options) -> tuple[SystemParams, SimState]:
    try:
        build = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    return build(**options)


# ------------------------------------------------------------------ single cycle

@dataclass
class CycleSlice:
    params: SystemParams
    epsilon: float
    traj: Trajectory = field(repr=False)
    t_start: float
    t_end: float

    def state(self, t: float) -> np.ndarray:
        return self.traj.sol(t)[:, 0]

    def nodes(self, n: int = 8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadrature nodes, weights and states over [t_start, t_end]."""
        xg, wg = _gl(n)
        t = np.append(self.traj.t[self.traj.t < self.t_end], self.t_end)
        a, b = t[:-1], t[1:]
        tt = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * xg[None, :]
        ww = (0.5 * (b - a))[:, None] * wg[None, :]
        tt, ww = tt.ravel(), ww.ravel()
        return tt, ww, self.traj.sol(tt)


def _diagonal_event(epsilon: float, terminal: bool) -> Event:
    le = math.log(epsilon)
    return Event("cycle", lambda t, y: y[0] - y[1], direction=-1, guard=lambda t, y: y[0] > le,
                 terminal=terminal)


def integrate_cycle(params: SystemParams, state: SimState, cfg: StepperConfig = BD_CONFIG,
                    t_max: float | None = None) -> CycleSlice:
    """Integrate with dense output up to the next start of a cycle."""
    eps = cluster_number(state)
    if t_max is None:
        t_max = 50.0 / eps ** 2
    traj = integrate_log_full(params, state, (state.t, state.t + t_max), cfg,
                              events=[_diagonal_event(eps, True)], keep_dense=True)
    if not traj.events:
        raise RuntimeError(f"no cycle boundary within {t_max:g}")
    return CycleSlice(params, eps, traj, state.t, traj.events[0].t)


def energy_change_per_cycle(sl: CycleSlice, nodes: int = 8) -> float:
    """Quadrature of (eps - v) c_1 (+ the truncation flux term) over the slice."""
    _, ww, y = sl.nodes(nodes)
    return float(np.dot(ww, _energy_rate(y, sl.epsilon)))


def direct_energy_change(sl: CycleSlice) -> float:
    return _energy(sl.state(sl.t_end), sl.epsilon) - _energy(sl.state(sl.t_start), sl.epsilon)


def localization_fraction(sl: CycleSlice, v_factor: float = 10.0, c1_factor: float = 0.1,
                          nodes: int = 8) -> float:
    """Share of the cycle's energy change accrued where v > v_factor eps and c_1 > c1_factor max c_1."""
    _, ww, y = sl.nodes(nodes)
    rate = _energy_rate(y, sl.epsilon)
    total = float(np.dot(ww, rate))
    if total == 0.0:
        return 1.0
    mask = (np.exp(y[0]) > v_factor * sl.epsilon) & (y[2] > c1_factor * y[2].max())
    return abs(float(np.dot(ww[mask], rate[mask]))) / abs(total)


# ------------------------------------------------------------------ multi-cycle run

@dataclass
class FullRun:
    params: SystemParams
    epsilon: float
    cycles: list[CycleObservables]
    samples: np.ndarray = field(repr=False)  # columns t, v, w, E, c1, L, m
    final: SimState = field(repr=False)
    max_number_error: float = 0.0
    max_mass_error: float = 0.0
    n_steps: int = 0
    phase4_start: float | None = None
    phase4_trace: np.ndarray = field(default_factory=lambda: np.empty((0, 2)), repr=False)
    stop_reason: str = ""

    SAMPLE_COLUMNS = ("t", "v", "w", "E", "c1", "L", "m")

    @property
    def E(self) -> np.ndarray:
        return np.array([c.E_n for c in self.cycles])

    @property
    def L(self) -> np.ndarray:
        return np.array([c.L_n for c in self.cycles])

    def conservation_ok(self, number_tol: float = 1e-10, mass_tol: float = 1e-8) -> bool:
        return self.max_number_error <= number_tol and self.max_mass_error <= mass_tol

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_max": self.params.n_max,
            "total_mass": self.params.total_mass,
            "n_cycles": len(self.cycles),
            "t_final": self.final.t,
            "n_steps": self.n_steps,
            "max_number_error": self.max_number_error,
            "max_mass_error": self.max_mass_error,
            "phase4_start": self.phase4_start,
            "stop_reason": self.stop_reason,
        }


class _CycleTracker:
    """Per-step observer: cycle detection, energy quadrature, c_1 statistics, samples."""

    def __init__(self, params: SystemParams, y0: np.ndarray, t0: float, eps: float, nodes: int,
                 sample_dt: float, max_cycles: int | None, K_b: float, phase4_duration: float | None,
                 started: bool):
        self.params = params
        self.eps = eps
        self.le = math.log(eps)
        self.mass0 = params.total_mass
        self.xg, self.wg = _gl(nodes)
        ss = steady_state(params)
        self.ss = ss
        self.c1_burst = 10.0 * ss.c_bar[0]
        self.sample_dt = sample_dt
        self.max_cycles = max_cycles
        self.E_floor = K_b * eps ** 3
        self.phase4_duration = phase4_duration
        self.phase4_start = None
        self.p4 = []
        self.p4_dt = 0.02 / eps ** 3 if phase4_duration is None else phase4_duration / 100
        self.p4_due = -math.inf
        self.started = started
        self.cycles: list[CycleObservables] = []
        self.samples = []
        self.number_err = 0.0
        self.mass_err = 0.0
        self._open(t0, y0)
        self._sample(t0, y0)
        self.next_sample = t0 + sample_dt
        self.stop_reason = ""

    def _open(self, t: float, y: np.ndarray) -> None:
        self.start_t = t
        self.start_y = y.copy()
        self.start_E = _energy(y, self.eps)
        self.quad = 0.0
        self.c1_max = float(y[2])
        self.burst_time = 0.0

    def _sample(self, t: float, y: np.ndarray) -> None:
        c = y[2:]
        E = _energy(y, self.eps)
        self.samples.append((t, math.exp(y[0]), math.exp(y[1]), E, y[2], characteristic_length(c),
                             small_cluster_fraction(c, E, self.eps)))

    def _check(self, y: np.ndarray) -> None:
        st = unpack_log_state(0.0, y)
        self.number_err = max(self.number_err, abs(cluster_number(st) - self.eps) / self.eps)
        self.mass_err = max(self.mass_err, abs(total_mass(st) - self.mass0) / self.mass0)

    def _accumulate(self, interp, a: float, b: float) -> None:
        if b <= a:
            return
        tt = 0.5 * (a + b) + 0.5 * (b - a) * self.xg
        y = interp(tt)
        rate = _energy_rate(y, self.eps)
        self.quad += 0.5 * (b - a) * float(np.dot(self.wg, rate))
        self.c1_max = max(self.c1_max, float(y[2].max()))
        self.burst_time += 0.5 * (b - a) * float(np.dot(self.wg, y[2] > self.c1_burst))

    def _close(self, t: float, y: np.ndarray) -> None:
        E_end = _energy(y, self.eps)
        c0 = self.start_y[2:]
        T = t - self.start_t
        v0, w0 = math.exp(self.start_y[0]), math.exp(self.start_y[1])
        self.cycles.append(CycleObservables(
            n=len(self.cycles), t_start=self.start_t, t_end=t, E_n=self.start_E, T_n=T,
            L_n=characteristic_length(c0), m_n=small_cluster_fraction(c0, self.start_E, self.eps),
            c1_max=self.c1_max, dE_n=E_end - self.start_E, dE_quad=self.quad,
            E_centred=centred_energy(v0, w0, self.ss.v_bar, self.ss.w_bar, self.eps),
            burst_fraction=self.burst_time / T))
        self._check(y)

    def __call__(self, t0, t1, y0, y1, interp) -> bool:
        g0, g1 = y0[0] - y0[1], y1[0] - y1[1]
        a = t0
        if g0 > 0 and g1 <= 0:
            tr = t1 if g1 == 0 else brentq(lambda s: float(interp(s)[0] - interp(s)[1]), t0, t1,
                                           xtol=1e-12, rtol=1e-15)
            yr = interp(tr)
            if yr[0] > self.le:
                self._accumulate(interp, t0, tr)
                if self.started:
                    self._close(tr, yr)
                self.started = True
                self._open(tr, yr)
                a = tr
        self._accumulate(interp, a, t1)
        while self.next_sample <= t1:
            self._sample(self.next_sample, interp(self.next_sample))
            self.next_sample += self.sample_dt
        E1 = _energy(y1, self.eps)
        if self.phase4_start is None and E1 < self.E_floor:
            self.phase4_start = t1
        if self.phase4_start is not None and self.p4_due <= t1:
            self.p4.append((t1, fsum(np.abs(y1[2:] - self.ss.c_bar)) / self.eps))
            self.p4_due = t1 + self.p4_dt
        if self.max_cycles is not None and len(self.cycles) >= self.max_cycles:
            self.stop_reason = "n_cycles"
            return True
        if (self.phase4_start is not None and self.phase4_duration is not None
                and t1 - self.phase4_start >= self.phase4_duration):
            self.stop_reason = "phase4_tracked"
            return True
        return False


def run_full(params: SystemParams, initial: SimState, n_cycles: int | None = None, t_end: float | None = None,
             cfg: StepperConfig = BD_CONFIG, sample_dt: float | None = None, phase4_duration: float | None = None,
             K_b: float = 5.0, nodes: int = 8, strict: bool = False) -> FullRun:
    """Integrate over many cycles.

    Stops after ``n_cycles`` completed cycles, at ``t_end``, or once the
    energy has stayed below K_b eps^3 for ``phase4_duration`` (whichever comes
    first).  The first cycle is counted from t = 0 when the run starts on the
    diagonal, otherwise from the first crossing.  With ``strict`` a breach of
    the conservation tolerances raises ConservationError.
    """
    eps = cluster_number(initial)
    if abs(eps - params.epsilon) > 1e-12 * params.epsilon:
        raise ValueError(f"sum c = {eps!r} does not match epsilon = {params.epsilon!r}")
    if abs(total_mass(initial) - params.total_mass) > 1e-12 * params.total_mass:
        raise ValueError("initial mass does not match params.total_mass")
    if n_cycles is None and t_end is None and phase4_duration is None:
        raise ValueError("give n_cycles, t_end or phase4_duration")
    if t_end is None:
        t_end = initial.t + 1e9
    if sample_dt is None:
        sample_dt = 2 * math.pi / eps / 8
    y0 = pack_log_state(initial)
    # a start on the diagonal v = w > eps opens the first cycle right away
    on_diagonal = abs(initial.v - initial.w) <= 1e-14 * initial.v and initial.v > eps
    tr = _CycleTracker(params, y0, initial.t, eps, nodes, sample_dt, n_cycles, K_b, phase4_duration,
                       on_diagonal)
    traj = integrate_log_full(params, initial, (initial.t, t_end), cfg, on_step=tr, record_every=10 ** 9)
    y_final = traj.y[-1]
    tr._check(y_final)
    final = unpack_log_state(float(traj.t[-1]), y_final)
    run = FullRun(params=params, epsilon=eps, cycles=tr.cycles, samples=np.array(tr.samples),
                  final=final, max_number_error=tr.number_err, max_mass_error=tr.mass_err,
                  n_steps=traj.n_steps, phase4_start=tr.phase4_start,
                  phase4_trace=np.array(tr.p4).reshape(-1, 2), stop_reason=tr.stop_reason or "t_end")
    if strict and not run.conservation_ok():
        raise ConservationError("conservation tolerance exceeded", run.summary())
    return run


# ------------------------------------------------------------------ phases

@dataclass
class PhaseReport:
    labels: list[str]
    transitions: dict
    rates: dict
    thresholds: dict

    def counts(self) -> dict:
        return {p: self.labels.count(p) for p in PHASES}

    def as_dict(self) -> dict:
        return {"labels": self.labels, "transitions": self.transitions, "rates": self.rates,
                "thresholds": self.thresholds, "counts": self.counts()}


def _log_slope(n: np.ndarray, E: np.ndarray) -> float | None:
    ok = E > 0
    if np.count_nonzero(ok) < 3:
        return None
    return -float(np.polyfit(n[ok], np.log(E[ok]), 1)[0])


def classify_phases(observables, epsilon: float, E0: float | None = None, half: float = 0.5,
                    K_a: float = 5.0, K_b: float = 5.0) -> PhaseReport:
    """Label cycles I-IV by their energy and length; labels never move backwards.

    Phase I while E_n > half E0 and L_n < half/eps, Phase II while E_n > K_a eps,
    Phase III while E_n > K_b eps^3, Phase IV afterwards.  ``observables`` may
    be CycleObservables or (E_n, L_n) pairs.
    """
    obs = list(observables)
    if len(obs) < 3:
        raise ValueError("classification needs at least 3 cycles")
    pairs = [(o.E_n, o.L_n) if isinstance(o, CycleObservables) else (float(o[0]), float(o[1])) for o in obs]
    E = np.array([p[0] for p in pairs])
    L = np.array([p[1] for p in pairs])
    if E0 is None:
        E0 = float(E[0])
    labels = []
    level = 0
    for e, ell in zip(E, L):
        if e > half * E0 and ell < half / epsilon:
            k = 0
        elif e > K_a * epsilon:
            k = 1
        elif e > K_b * epsilon ** 3:
            k = 2
        else:
            k = 3
        level = max(level, k)
        labels.append(PHASES[level])
    transitions = {p: labels.index(p) for p in PHASES if p in labels}
    n = np.arange(len(E), dtype=float)
    rates = {}
    for p in ("II", "III"):
        sel = np.array([lab == p for lab in labels])
        if np.count_nonzero(sel) >= 3:
            rates[p] = _log_slope(n[sel], E[sel])
    return PhaseReport(labels=labels, transitions=transitions, rates=rates,
                       thresholds={"half": half, "K_a": K_a, "K_b": K_b, "E0": E0})


def cycle_count_estimates(epsilon: float, L0: float | None = None, A: float | None = None,
                          a: float | None = None) -> dict:
    """Order-of-magnitude cycle counts per phase and the Phase IV time scale.

    Phase I assumes E = O(1): L^2 grows by 2A/eps per cycle until L ~ 1/eps.
    """
    if not 0.0 < epsilon < 0.1:
        raise ValueError("estimates need 0 < eps < 0.1")
    if L0 is None:
        L0 = 1.0 / math.sqrt(epsilon)
    if A is None:
        from .blayer import compute_A, solve_stationary
        A = compute_A(solve_stationary())
    if a is None:
        from .phase34 import spectral_constants
        a = spectral_constants().a
    return {
        "A": A,
        "a": a,
        "phase1_cycles": max(0.0, (1.0 / epsilon - L0 ** 2 * epsilon) / (2 * A)),
        "phase2_cycles": math.log(1.0 / epsilon) / (A * epsilon),
        "phase3_cycles": math.log(1.0 / epsilon ** 2) / (a * epsilon),
        "phase4_time": 1.0 / epsilon ** 3,
    }
