"""Cycle-to-cycle maps for the rescaled size distribution.

A profile phi = psi + m delta_0 with unit zeroth and first moments is pushed
through one heat-semigroup step of "time" sigma^2 = D/L^2, reflected mass is
collected into the Dirac weight, and the length scale is updated so the first
moment stays one.  Integrals against the Gaussian kernel use composite
Gauss-Legendre panels whose width is matched to the kernel width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import erfc

SQRT_PI = math.sqrt(math.pi)


class QuadratureError(RuntimeError):
    pass


class RegimeError(ValueError):
    pass


def heat_kernel(xi, s):
    """G(xi; s) = exp(-xi^2/(4 s)) / sqrt(4 pi s)."""
    if np.any(np.asarray(s) <= 0):
        raise ValueError("heat kernel needs s > 0")
    xi = np.asarray(xi, dtype=float)
    out = np.exp(-xi ** 2 / (4.0 * s)) / np.sqrt(4.0 * math.pi * s)
    return float(out) if out.ndim == 0 else out


def half_line_tail(eta, s):
    """int_{-inf}^0 G(z - eta; s) dz = erfc(eta / (2 sqrt s)) / 2."""
    return 0.5 * erfc(np.asarray(eta) / (2.0 * math.sqrt(s)))


def first_moment_kernel(eta, s):
    """h(eta) = int_0^inf x G(x + eta; s) dx."""
    eta = np.asarray(eta, dtype=float)
    rs = math.sqrt(s)
    return rs / SQRT_PI * np.exp(-eta ** 2 / (4 * s)) - 0.5 * eta * erfc(eta / (2 * rs))


def psi_fixed_point(x):
    """(2/pi) exp(-x^2/pi): unit mass, unit first moment."""
    return (2.0 / math.pi) * np.exp(-np.asarray(x) ** 2 / math.pi)


@dataclass(frozen=True)
class PanelGrid:
    """Composite Gauss-Legendre nodes on [0, x_max]."""
    x_max: float = 10.0
    panel: float = 0.25
    order: int = 16

    @property
    def n_panels(self) -> int:
        return int(math.ceil(self.x_max / self.panel - 1e-12))

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_panels + 1)

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        xg, wg = np.polynomial.legendre.leggauss(self.order)
        e = self.edges
        mid = 0.5 * (e[1:] + e[:-1])
        half = 0.5 * (e[1:] - e[:-1])
        x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        w = (half[:, None] * wg[None, :]).ravel()
        return x, w

    def interpolate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Panel-wise polynomial interpolation of nodal values (zero outside)."""
        xg, _ = np.polynomial.legendre.leggauss(self.order)
        V = np.polynomial.legendre.legvander(xg, self.order - 1)
        coef = np.linalg.solve(V, values.reshape(self.n_panels, self.order).T)  # (order, panels)
        x = np.asarray(x, dtype=float)
        e = self.edges
        k = np.clip(np.searchsorted(e, x, side="right") - 1, 0, self.n_panels - 1)
        u = (x - 0.5 * (e[k] + e[k + 1])) / (0.5 * (e[k + 1] - e[k]))
        Vx = np.polynomial.legendre.legvander(u, self.order - 1)
        out = np.einsum("ij,ji->i", Vx, coef[:, k])
        out[(x < 0) | (x > self.x_max)] = 0.0
        return out


def grid_for(sigma2: float, x_max: float = 10.0, order: int = 16) -> PanelGrid:
    """Panels at most two kernel standard deviations sqrt(2 sigma2) wide."""
    return PanelGrid(x_max=x_max, panel=min(0.25, 2.0 * math.sqrt(2.0 * sigma2)), order=order)


@dataclass
class ClusterProfile:
    L: float
    m: float
    psi: np.ndarray = field(repr=False)
    grid: PanelGrid = field(default_factory=PanelGrid)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        x, _ = self.grid.nodes_weights()
        if self.psi.shape != x.shape:
            raise ValueError("psi must be sampled at the grid nodes")

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes_weights()[0]

    def moments(self) -> tuple[float, float]:
        x, w = self.grid.nodes_weights()
        return self.m + float(np.dot(w, self.psi)), float(np.dot(w, x * self.psi))

    def at(self, x) -> np.ndarray:
        return self.grid.interpolate(self.psi, x)

    def regrid(self, grid: PanelGrid) -> "ClusterProfile":
        x, _ = grid.nodes_weights()
        return ClusterProfile(self.L, self.m, self.at(x), grid)

    @classmethod
    def from_function(cls, fn, L: float = 1.0, m: float = 0.0, grid: PanelGrid | None = None):
        grid = grid or PanelGrid()
        x, _ = grid.nodes_weights()
        return cls(L, m, fn(x), grid)

    @classmethod
    def half_gaussian(cls, m: float, L: float = 1.0, grid: PanelGrid | None = None):
        """Dirac weight m plus a half-Gaussian carrying mass 1 - m and first moment 1."""
        if not 0 <= m < 1:
            raise ValueError("need 0 <= m < 1")
        mass = 1.0 - m
        width = math.sqrt(math.pi / 2.0) / mass  # first moment / mass of c e^{-x^2/2w^2}
        amp = mass / (width * math.sqrt(math.pi / 2.0))
        return cls.from_function(lambda x: amp * np.exp(-x ** 2 / (2 * width ** 2)), L, m, grid)


def _kernel_matrix(targets: np.ndarray, nodes: np.ndarray, weights: np.ndarray, s: float,
                   cutoff_sd: float = 9.0) -> sparse.csr_matrix:
    """Sparse K[i, k] = w_k G(targets_i - nodes_k; s), dropped beyond cutoff_sd kernel widths."""
    width = cutoff_sd * math.sqrt(2.0 * s)
    lo = np.searchsorted(nodes, targets - width)
    hi = np.searchsorted(nodes, targets + width)
    counts = hi - lo
    indptr = np.concatenate([[0], np.cumsum(counts)])
    total = int(indptr[-1])
    rows = np.repeat(np.arange(len(targets)), counts)
    cols = np.arange(total) - np.repeat(indptr[:-1], counts) + np.repeat(lo, counts)
    vals = heat_kernel(targets[rows] - nodes[cols], s) * weights[cols]
    return sparse.csr_matrix((vals, cols, indptr), shape=(len(targets), len(nodes)))


def _check_resolution(grid: PanelGrid, sigma2: float) -> None:
    if grid.panel > 3.0 * math.sqrt(2.0 * sigma2) + 1e-15:
        raise QuadratureError(
            f"panel width {grid.panel:g} too coarse for sigma^2={sigma2:g}; regrid with grid_for()")


def iterate_profile(profile: ClusterProfile, sigma2: float, check: bool = True) -> ClusterProfile:
    """One cycle of the profile map; returns the profile with L multiplied by the length ratio."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    _check_resolution(profile.grid, sigma2)
    x, w = profile.grid.nodes_weights()
    psi, m, s = profile.psi, profile.m, sigma2
    ratio = 1.0 + float(np.dot(w, psi * first_moment_kernel(x, s))) + m * math.sqrt(s / math.pi)
    m_next = float(np.dot(w, psi * half_line_tail(x, s))) + 0.5 * m
    K = _kernel_matrix(ratio * x, x, w, s)
    psi_next = ratio * (K @ psi) + m * ratio * heat_kernel(ratio * x, s)
    out = ClusterProfile(L=profile.L * ratio, m=m_next, psi=psi_next, grid=profile.grid)
    if check:
        before = profile.moments()
        m0, m1 = out.moments()
        tail = float(psi_next[-1])
        # the map preserves mass exactly and the first moment when it starts at one
        target1 = 1.0 if abs(before[1] - 1.0) < 1e-6 else m1
        if abs(m0 - before[0]) > 1e-8 or abs(m1 - target1) > 1e-8:
            raise QuadratureError(f"moments drifted: mass {m0!r}, first moment {m1!r}")
        if tail > 1e-9:
            raise QuadratureError(f"profile not decayed at x_max (psi = {tail:g}); enlarge x_max")
    return out


def iterate_linearized(profile: ClusterProfile, sigma2: float) -> ClusterProfile:
    """Small-sigma map psi -> r [psi + sigma^2 psi''](r x), r fixed by the first moment.

    Only the smooth part is transported; psi'' comes from the panel polynomials.
    """
    x, w = profile.grid.nodes_weights()
    g = profile.grid
    xg, _ = np.polynomial.legendre.leggauss(g.order)
    V = np.polynomial.legendre.legvander(xg, g.order - 1)
    coef = np.linalg.solve(V, profile.psi.reshape(g.n_panels, g.order).T)
    d2 = np.polynomial.legendre.legder(coef, 2) * (2.0 / g.panel) ** 2
    second = np.concatenate([np.polynomial.legendre.legval(xg, d2[:, k]) for k in range(g.n_panels)])
    base = profile.psi + sigma2 * second
    # first moment of r f(r x) is (1/r) * first moment of f
    r = float(np.dot(w, x * base))
    psi_next = r * g.interpolate(base, r * x)
    return ClusterProfile(L=profile.L * r, m=profile.m, psi=psi_next, grid=g)


def l1_distance(profile: ClusterProfile, fn=psi_fixed_point) -> float:
    """L1 distance of the smooth part to fn, plus the Dirac weight."""
    x, w = profile.grid.nodes_weights()
    return float(np.dot(w, np.abs(profile.psi - fn(x)))) + abs(profile.m)


def shape_distance(profile: ClusterProfile, fn=psi_fixed_point) -> float:
    """L1 distance to fn after rescaling the smooth part to unit mass and unit first moment.

    The Dirac weight and the overall scale drop out, so this measures the
    profile's shape only.
    """
    x, w = profile.grid.nodes_weights()
    mu0 = float(np.dot(w, profile.psi))
    mu1 = float(np.dot(w, x * profile.psi))
    k = mu1 / mu0
    scaled = (k / mu0) * profile.grid.interpolate(profile.psi, k * x)
    return float(np.dot(w, np.abs(scaled - fn(x))))


def psi_equation_residual(x) -> np.ndarray:
    """a psi + a x psi' + psi'' for the closed form, a = 2/pi (analytic derivatives)."""
    a = 2.0 / math.pi
    x = np.asarray(x, dtype=float)
    p = psi_fixed_point(x)
    dp = -2.0 * x / math.pi * p
    d2p = (4.0 * x ** 2 / math.pi ** 2 - 2.0 / math.pi) * p
    return a * p + a * x * dp + d2p


# ---------------------------------------------------------------- energy

def sigma2_for(E: float, epsilon: float, L: float, D: float | None = None) -> float:
    """sigma_n^2 = D(E, eps)/L^2; D from a solved cycle when E/eps < 100."""
    if D is None:
        if E / epsilon < 100:
            from .lv import diffusion_total
            D = diffusion_total(E, epsilon)
        else:
            D = E / epsilon
    return D / L ** 2


def energy_decrement(profile: ClusterProfile, E: float, epsilon: float, D: float | None = None) -> dict:
    """Energy lost in one cycle, by direct integration of |s| W(s) over s < 0.

    W is the heat-semigroup image of the profile, evaluated in rescaled units
    z = s/L.  The closed decomposition eps L (m sigma/sqrt(pi) + int psi h) is
    returned alongside.
    """
    if E <= epsilon:
        raise RegimeError("energy_decrement needs E > eps")
    s2 = sigma2_for(E, epsilon, profile.L, D)
    sig = math.sqrt(s2)
    x, w = profile.grid.nodes_weights()
    smooth = float(np.dot(w, profile.psi * first_moment_kernel(x, s2)))
    dirac = profile.m * sig / SQRT_PI
    closed = epsilon * profile.L * (dirac + smooth)
    zgrid = PanelGrid(x_max=14.0 * math.sqrt(2.0 * s2) + profile.grid.x_max,
                      panel=min(profile.grid.panel, math.sqrt(2.0 * s2)), order=profile.grid.order)
    zn, zw = zgrid.nodes_weights()
    z = -zn  # s < 0
    W = _kernel_matrix(z, x, w, s2) @ profile.psi + profile.m * heat_kernel(z, s2)
    direct = epsilon * profile.L * float(np.dot(zw, zn * W))
    return {"direct": direct, "closed": closed, "dirac_term": epsilon * profile.L * dirac,
            "smooth_term": epsilon * profile.L * smooth, "sigma2": s2}


def iterate_length_energy(L: float, E: float, epsilon: float, A: float) -> tuple[float, float]:
    if E <= 5 * epsilon:
        raise RegimeError(f"recursion valid only for E >> eps (got E={E:g}, eps={epsilon:g})")
    return L * (1.0 + A * E / (epsilon * L ** 2)), E - A * E / L


# ---------------------------------------------------------------- envelope

@dataclass
class EnvelopeState:
    s: np.ndarray
    ell: np.ndarray
    e: np.ndarray


def _implicit(ell: float) -> float:
    # -ell - log(1 - ell), accurate for small ell
    return -ell - math.log1p(-ell)


def envelope_solve(s_grid, A: float) -> EnvelopeState:
    """Solve -ell/A - log(1 - ell)/A = s for each s; e = 1 - ell."""
    if A <= 0:
        raise ValueError("A must be positive")
    s_grid = np.asarray(s_grid, dtype=float)
    ell = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        target = A * s
        if target == 0:
            ell[i] = 0.0
            continue
        if target > 700:
            # e = exp(-1 - A s) to double precision once ell is 1 - tiny
            ell[i] = -math.expm1(-1.0 - target)
            continue
        lo, hi = 0.0, 1.0 - 1e-300
        hi = min(hi, 1.0 - math.exp(-target - 2.0))
        while _implicit(hi) < target:
            hi = 0.5 * (hi + 1.0)
        try:
            ell[i] = brentq(lambda l: _implicit(l) - target, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=400)
        except ValueError as exc:
            raise RuntimeError(f"bracket failure at s={s}") from exc
    return EnvelopeState(s=s_grid, ell=ell, e=1.0 - ell)


def envelope_ode(s_grid, A: float, s0: float | None = None) -> EnvelopeState:
    """Integrate d ell/ds = A e/ell, de/ds = -A e/ell from a small-s start on the implicit curve."""
    s_grid = np.asarray(s_grid, dtype=float)
    if s0 is None:
        s0 = min(1e-8, 0.5 * s_grid[s_grid > 0].min())
    start = envelope_solve([s0], A)
    y0 = [start.ell[0], start.e[0]]
    sol = solve_ivp(lambda s, y: [A * y[1] / y[0], -A * y[1] / y[0]], (s0, s_grid.max()), y0,
                    method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
    y = sol.sol(np.maximum(s_grid, s0))
    return EnvelopeState(s=s_grid, ell=y[0], e=y[1])


# ---------------------------------------------------------------- boundary arrival

def boundary_collision_c1(W_front, tau_grid, tau_star: float) -> np.ndarray:
    """c1(tau) ~ int_{-inf}^{2(tau - tau*)} W(s) ds for a front moving to j = 0 at speed 2.

    ``W_front`` is a callable density with a decaying left tail.
    """
    from scipy.integrate import quad
    upper = 2.0 * (np.asarray(tau_grid, dtype=float) - tau_star)
    out = np.array([quad(W_front, -np.inf, u, limit=200)[0] for u in upper])
    return np.maximum.accumulate(out)


def boundary_chain_c1(W_front, tau_grid, tau_star: float, eps_over_E0: float = 0.0, J: int | None = None) -> np.ndarray:
    """Discrete boundary system dc_j/dtau = 2(c_{j+1} - c_j), dc_1/dtau = 2(c_2 - (eps/E0) c_1).

    The chain starts from c_j(0) = W(j - 2 tau*) and is fed at its right end
    by the same front.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if J is None:
        J = int(2 * tau_star + 2 * tau.max() + 40)
    j = np.arange(1, J + 1, dtype=float)
    c0 = np.array([W_front(jj - 2.0 * tau_star) for jj in j])

    def rhs(t, c):
        nxt = np.append(c[1:], W_front(J + 1 - 2.0 * (tau_star - t)))
        d = 2.0 * (nxt - c)
        d[0] = 2.0 * (c[1] - eps_over_E0 * c[0])
        return d

    sol = solve_ivp(rhs, (0.0, tau.max()), c0, method="DOP853", rtol=1e-9, atol=1e-12, t_eval=tau)
    return sol.y[0]
