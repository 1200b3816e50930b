"""Newton solver for the radial twisted soliton equation, the continuity
path in t, the smoothing flow and the R-invariant bisection.

The scalar equation at parameter t reads

    log(u_phi''/u_b'') = h_b - beta t phi - theta_X - c phi'

with theta_X = c u_b' + a(c).  Interior nodes carry the residual

    r = log1p(phi''/u_b'') - h_b + beta t phi + c u_b' + a(c) + c phi'.

The two end nodes carry Robin conditions that encode the exponential tails
of the metric density: near s = -inf, u'' ~ A e^{alpha s} with alpha the
local value of (log u'')' predicted by the equation, so u'/u'' = 1/alpha,
and symmetrically (2 - u')/u'' = 1/alpha at s = +inf.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, NonConvergence, NumericalError, PositivityError
from .functionals import EnergyReport, aubin_yau, energy_report
from .geometry import (RadialPotential, TWO_PI, VOLUME, integrate, theta_shift,
                       theta_shift_derivative, build_grid, fs_potential)
from .problem import Setting, fs_setting
from .twist import TwistSpec


@dataclass
class NewtonSettings:
    residual_tol: float = 1e-10
    max_iters: int = 50
    damping: float = 1.0
    positivity_floor: float = 1e-12

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ConfigError("damping must lie in (0, 1]")


@dataclass
class NewtonResult:
    phi: np.ndarray
    iterations: int
    residual_history: List[float]
    c: float
    shift: float = 0.0
    mode: str = "plain"
    split: Optional["SplitPotential"] = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.phi, self.iterations, self.residual_history))

    @property
    def residual_sup(self) -> float:
        return self.residual_history[-1]


# ---------------------------------------------------------------------------
# potentials split into asymptotic constants and a decaying part

def _logistic(s):
    """g = u0'/2 with exact derivatives."""
    g = 1.0 / (1.0 + np.exp(-s))
    g1 = 0.5 * 0.5 / np.cosh(0.5 * s) ** 2
    g2 = g1 * (1.0 - 2.0 * g)
    return g, g1, g2


@dataclass
class SplitPotential:
    """phi = A + B g(s) + psi with g = 1/(1 + e^{-s}) and psi -> 0 at both
    ends.  Near the poles phi itself is a large constant plus a tiny
    variation; storing the variation separately keeps the finite-difference
    curvature accurate relative to u'' (which is ~ e^{-s_max} there)."""

    psi: np.ndarray
    A: float
    B: float

    @classmethod
    def from_array(cls, phi, grid) -> "SplitPotential":
        phi = np.asarray(phi, dtype=float)
        g, _, _ = _logistic(grid.nodes)
        A = float(phi[0])
        B = float(phi[-1] - phi[0])
        return cls(phi - A - B * g, A, B)

    def values(self, grid) -> np.ndarray:
        g, _, _ = _logistic(grid.nodes)
        return self.A + self.B * g + self.psi

    def derivatives(self, grid):
        _, g1, g2 = _logistic(grid.nodes)
        p1, p2 = grid.derivatives(self.psi)
        return self.B * g1 + p1, self.B * g2 + p2

    def axpy(self, h, other: "SplitPotential") -> "SplitPotential":
        return SplitPotential(self.psi + h * other.psi, self.A + h * other.A, self.B + h * other.B)


def _as_split(phi, grid) -> SplitPotential:
    return phi if isinstance(phi, SplitPotential) else SplitPotential.from_array(phi, grid)


# ---------------------------------------------------------------------------
# residual and Jacobian

def _parts(phi, d1, d2, setting: Setting, t: float, c: float):
    """Tail quantities at the two end nodes.

    With G = log u_b'' + h_b the equation gives the first two derivatives
    of log u'' in terms of phi: G' - bt phi' - c u'' and
    G'' - bt phi'' - c (u'')'.  Near a pole the moment profile is
    v = a tau + b tau^2, whose slope is the first of these and whose
    curvature is the second divided by u''.  The boundary condition
    u'/u'' = tau/v = 1/a then uses a = v'(tau) - tau v''/2, with tau = u'
    at -s_max and tau = 2 - u' at +s_max.
    """
    base = setting.base
    grid = setting.grid
    u1 = base.du + d1
    u2 = base.d2u + d2
    bt = setting.beta * t
    u3 = grid.d1(u2)
    tl = u1[0]
    tr = 2.0 - u1[-1]
    QL = (setting.d2logb[0] - bt * d2[0] - c * u3[0]) / u2[0]
    QR = (setting.d2logb[-1] - bt * d2[-1] - c * u3[-1]) / u2[-1]
    rL = setting.dlogb[0] - c * u2[0] - bt * d1[0]
    rR = -setting.dlogb[-1] + c * u2[-1] + bt * d1[-1]
    aL = rL - 0.5 * tl * QL
    aR = rR - 0.5 * tr * QR
    return dict(u1=u1, u2=u2, u3=u3, tl=tl, tr=tr, QL=QL, QR=QR, aL=aL, aR=aR)


def _expand(phi, grid):
    if isinstance(phi, SplitPotential):
        d1, d2 = phi.derivatives(grid)
        return phi.values(grid), d1, d2
    phi = np.asarray(phi, dtype=float)
    d1, d2 = grid.derivatives(phi)
    return phi, d1, d2


def residual(phi, setting: Setting, t: float = 1.0, c: Optional[float] = None,
             boundary: bool = True) -> np.ndarray:
    """Per-node residual for an array or a :class:`SplitPotential`;
    ``boundary=False`` gives the raw equation at every node (including the
    two ends)."""
    c = setting.c if c is None else float(c)
    base = setting.base
    phi, d1, d2 = _expand(phi, setting.grid)
    P = _parts(phi, d1, d2, setting, t, c)
    u2 = P["u2"]
    if np.any(u2 <= 0) or not np.all(np.isfinite(u2)):
        raise PositivityError("u_phi'' is not positive")
    r = (np.log1p(d2 / base.d2u) - setting.h0 + setting.beta * t * phi
         + c * base.du + theta_shift(c) + c * d1)
    if boundary:
        if P["aL"] <= 0 or P["aR"] <= 0:
            raise PositivityError("tail rates lost positivity")
        r[0] = P["tl"] / u2[0] - 1.0 / P["aL"]
        r[-1] = P["tr"] / u2[-1] - 1.0 / P["aR"]
    return r


def jacobian(phi, setting: Setting, t: float = 1.0, c: Optional[float] = None):
    """Sparse Jacobian of :func:`residual` with respect to nodal phi, plus
    the columns d/dc and d/dt (dense vectors)."""
    c = setting.c if c is None else float(c)
    base = setting.base
    D1, D2 = setting.grid.matrices
    phi, d1, d2 = _expand(phi, setting.grid)
    P = _parts(phi, d1, d2, setting, t, c)
    u2, u3 = P["u2"], P["u3"]
    beta = setting.beta
    bt = beta * t
    n = len(phi)
    J = (sp.diags(1.0 / u2) @ D2 + bt * sp.identity(n) + c * D1).tolil()
    D12 = (D1 @ D2).tocsr()
    dc = base.du + d1 + theta_shift_derivative(c)
    dt = beta * phi.copy()
    for k, sgn in ((0, 1.0), (n - 1, -1.0)):
        tk = P["tl"] if k == 0 else P["tr"]
        Q = P["QL"] if k == 0 else P["QR"]
        a = P["aL"] if k == 0 else P["aR"]
        # slope r = sgn (log u'')', a = r - tau Q / 2
        dr = sgn * (-bt * D1[k] - c * D2[k])
        dtau = sgn * D1[k]
        dQ = (-bt * D2[k] - c * D12[k]) / u2[k] - (Q / u2[k]) * D2[k]
        da = dr - 0.5 * Q * dtau - 0.5 * tk * dQ
        row = dtau / u2[k] - (tk / u2[k] ** 2) * D2[k] + da / a ** 2
        J[k, :] = row.toarray().ravel()
        da_dc = sgn * (-u2[k]) + 0.5 * tk * u3[k] / u2[k]
        dc[k] = da_dc / a ** 2
        da_dt = sgn * (-beta * d1[k]) + 0.5 * tk * beta * d2[k] / u2[k]
        dt[k] = da_dt / a ** 2
    return J.tocsr(), dc, dt


def _gauge_rows(setting: Setting):
    grid = setting.grid
    base = setting.base
    q = grid.weights / np.cosh(grid.nodes) ** 2
    w0 = grid.weights * np.exp(setting.h0) * base.d2u
    return q, w0 / w0.sum()


def _select_mode(setting: Setting, t: float, mode: str) -> str:
    if mode != "auto":
        if mode not in ("plain", "field", "t0", "field+t0"):
            raise ConfigError(f"unknown Newton mode {mode!r}")
        return mode
    if t == 0.0:
        return "t0"
    if abs(setting.beta * t - 1.0) < 1e-12 and setting.c == 0.0 and not setting.strictly_positive_twist:
        # tau - 1 spans the kernel of the linearization: solve for c as well
        return "field"
    return "plain"


class _System:
    """Bordered system for the chosen mode.

    Unknowns x = (psi, A, B, [c], [mu]); rows are the N residuals, the pins
    psi[0] = psi[-1] = 0 and the gauge rows of the free scalars."""

    def __init__(self, setting: Setting, t: float, mode: str):
        self.setting = setting
        self.grid = setting.grid
        self.t = t
        self.mode = mode
        self.free_c = "field" in mode
        self.free_mu = "t0" in mode
        self.n = setting.grid.n
        self.q, self.w0 = _gauge_rows(setting)
        self.g = _logistic(self.grid.nodes)

    def pack(self, phi: SplitPotential, c, mu):
        x = [phi.psi, [phi.A, phi.B]]
        if self.free_c:
            x.append([c])
        if self.free_mu:
            x.append([mu])
        return np.concatenate(x)

    def unpack(self, x):
        n = self.n
        phi = SplitPotential(x[:n].copy(), float(x[n]), float(x[n + 1]))
        k = n + 2
        c = self.setting.c
        mu = 0.0
        if self.free_c:
            c = float(x[k])
            k += 1
        if self.free_mu:
            mu = float(x[k])
        return phi, c, mu

    def F(self, x):
        phi, c, mu = self.unpack(x)
        r = residual(phi, self.setting, self.t, c)
        if self.free_mu:
            r[1:-1] += mu
        out = [r, [phi.psi[0], phi.psi[-1]]]
        if self.free_c:
            d1, _ = phi.derivatives(self.grid)
            out.append([self.q @ (self.setting.base.du + d1 - 1.0)])
        if self.free_mu:
            out.append([self.w0 @ phi.values(self.grid)])
        return np.concatenate(out)

    def J(self, x):
        phi, c, mu = self.unpack(x)
        n = self.n
        Jp, dc, dt = jacobian(phi, self.setting, self.t, c)
        g, g1, g2 = self.g
        D1, _ = self.grid.matrices
        colA = Jp @ np.ones(n)
        colB = Jp @ g
        pins = sp.csr_matrix(([1.0, 1.0], ([0, 1], [0, n - 1])), shape=(2, n))
        cols = [colA[:, None], colB[:, None]]
        rows = [sp.hstack([pins, sp.csr_matrix((2, 2))])]
        extra_t = [0.0, 0.0]
        if self.free_c:
            cols.append(dc[:, None])
            rows.append(sp.hstack([sp.csr_matrix(self.q @ D1), sp.csr_matrix([[0.0, self.q @ g1]])]))
            extra_t.append(0.0)
        if self.free_mu:
            one = np.ones((n, 1))
            one[0] = one[-1] = 0.0
            cols.append(one)
            rows.append(sp.csr_matrix(np.concatenate([self.w0, [self.w0.sum(), self.w0 @ g]])[None, :]))
            extra_t.append(0.0)
        k = len(cols)
        top = sp.hstack([Jp, sp.csr_matrix(np.hstack(cols))])
        # rows so far have n + 2 columns; pad to n + k
        bottom = sp.vstack([sp.hstack([r, sp.csr_matrix((r.shape[0], k - 2))]) if k > 2 else r
                            for r in rows])
        Jfull = sp.vstack([top, bottom]).tocsr()
        dtf = np.concatenate([dt, extra_t])
        return Jfull, dtf


def _solve(J, b):
    with np.errstate(all="ignore"):
        try:
            x = spsolve(J.tocsc(), b)
        except RuntimeError as exc:  # singular factorization
            raise NumericalError(f"linearized operator is singular (eigenvalue crossing): {exc}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("linearized operator is singular (eigenvalue crossing)")
    return x


def newton_solve(phi0, setting: Setting, t: float = 1.0, settings: Optional[NewtonSettings] = None,
                 mode: str = "auto", c0: Optional[float] = None) -> NewtonResult:
    """Damped Newton with halving line search on the 2-norm of the residual.

    ``phi0`` is a nodal array or a :class:`SplitPotential`.  Modes: 'plain'
    (phi only), 'field' (c unknown, translation fixed by
    sum q (u' - 1) = 0 with q = sech^2), 't0' (an added constant mu with the
    gauge int phi e^{h_b} omega_b = 0, used at t = 0), 'field+t0', or
    'auto'.
    """
    settings = settings or NewtonSettings()
    if not (0.0 <= t <= 1.0):
        raise ConfigError("t must lie in [0, 1]")
    mode = _select_mode(setting, t, mode)
    st = setting if c0 is None else setting.with_c(c0)
    sysm = _System(st, t, mode)
    if not isinstance(phi0, SplitPotential) and np.shape(phi0) != (setting.grid.n,):
        raise ConfigError("initial potential does not match the grid")
    phi = _as_split(phi0, st.grid)
    x = sysm.pack(phi, st.c, 0.0)
    try:
        Fx = sysm.F(x)
    except PositivityError as exc:
        raise PositivityError(f"initial guess not admissible: {exc}")
    if not np.all(np.isfinite(Fx)):
        raise NumericalError("initial residual is not finite")
    hist = [float(np.max(np.abs(Fx)))]
    it = 0
    while hist[-1] > settings.residual_tol:
        if it >= settings.max_iters:
            raise NonConvergence(f"Newton did not converge in {settings.max_iters} iterations "
                                 f"(residual {hist[-1]:.3e})")
        J, _ = sysm.J(x)
        dx = _solve(J, -Fx)
        merit = float(Fx @ Fx)
        lam = settings.damping
        for _ in range(40):
            xn = x + lam * dx
            try:
                with np.errstate(all="ignore"):
                    Fn = sysm.F(xn)
                    pn, _, _ = sysm.unpack(xn)
                    u2 = st.base.d2u + pn.derivatives(st.grid)[1]
                ok = np.all(np.isfinite(Fn)) and np.all(u2 > settings.positivity_floor)
            except (PositivityError, FloatingPointError):
                ok = False
            if ok and float(Fn @ Fn) <= (1.0 - 1e-4 * lam) * merit:
                break
            lam *= 0.5
        else:
            raise NonConvergence(f"line search failed (residual {hist[-1]:.3e})")
        x, Fx = xn, Fn
        it += 1
        hist.append(float(np.max(np.abs(Fx))))
    phi, c, mu = sysm.unpack(x)
    return NewtonResult(phi.values(st.grid), it, hist, c, mu, mode, phi)


def tangent(phi, setting: Setting, t: float, c: Optional[float] = None, mode: str = "auto"):
    """Tangent of the solution branch in t (implicit function theorem):
    returns (dphi/dt as a SplitPotential, dc/dt)."""
    mode = _select_mode(setting, t, mode)
    st = setting if c is None else setting.with_c(c)
    sysm = _System(st, t, mode)
    x = sysm.pack(_as_split(phi, st.grid), st.c, 0.0)
    J, dt = sysm.J(x)
    dx = _solve(J, -dt)
    n = sysm.n
    return SplitPotential(dx[:n], float(dx[n]), float(dx[n + 1])), (float(dx[n + 2]) if sysm.free_c else 0.0)


def jacobian_check(phi, setting: Setting, t: float = 1.0, seed: int = 0, h: float = 1e-5) -> float:
    """Relative mismatch between J psi and a central difference of the
    residual along a random smooth decaying psi (perturbations are applied
    to the split representation so the tails keep full precision)."""
    rng = np.random.default_rng(seed)
    grid = setting.grid
    s = grid.nodes
    psi = np.zeros_like(s)
    for k in range(1, 5):
        psi += rng.normal() / k ** 2 * np.cos(k * np.arctan(np.sinh(s / 2))) / np.cosh(s / 2)
    base = _as_split(phi, grid)
    dpsi = SplitPotential(psi, 0.0, 0.0)
    J, _, _ = jacobian(base, setting, t)
    lin = J @ psi
    fd = (residual(base.axpy(h, dpsi), setting, t) - residual(base.axpy(-h, dpsi), setting, t)) / (2 * h)
    return float(np.max(np.abs(lin - fd)) / max(np.max(np.abs(lin)), 1e-300))


def volume_normalization_gap(phi, setting: Setting, t: float) -> float:
    """(1/V) int e^{h_b - beta t phi} omega_b - 1; vanishes on solutions."""
    g = setting.h0 - setting.beta * t * np.asarray(phi)
    return float(integrate(np.exp(g), setting.base) / VOLUME - 1.0)


# ---------------------------------------------------------------------------
# continuity path

TRACE_COLUMNS = ("t", "residual_sup", "I_tilde", "J_tilde", "mu_tilde", "F_tilde", "F_hat",
                 "lambda1", "osc_phi", "x_phi_sup")


@dataclass
class ContinuityStep:
    t: float
    phi: np.ndarray
    residual_sup: float
    energies: Optional[EnergyReport]
    lambda1: float
    osc_phi: float
    x_phi_sup: float
    c: float = 0.0
    iterations: int = 0
    gap: float = 0.0        # (I_tilde - J_tilde)(phi_t)
    gap_rate: float = 0.0   # its t-derivative
    split: Optional[SplitPotential] = field(default=None, repr=False)


@dataclass
class ContinuityTrace:
    steps: List[ContinuityStep]
    schedule: List[float]
    status: str
    setting: Setting = field(repr=False, default=None)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def diverged_at(self) -> Optional[float]:
        if self.status.startswith("diverged_at("):
            return float(self.status[len("diverged_at("):-1])
        return None

    def rows(self):
        out = []
        for st in self.steps:
            e = st.energies
            out.append(dict(t=st.t, residual_sup=st.residual_sup,
                            I_tilde=e.I_tilde if e else math.nan, J_tilde=e.J_tilde if e else math.nan,
                            mu_tilde=e.mu_tilde if e else math.nan, F_tilde=e.F_tilde if e else math.nan,
                            F_hat=e.F_hat if e else math.nan, lambda1=st.lambda1,
                            osc_phi=st.osc_phi, x_phi_sup=st.x_phi_sup))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(float(v)) for k, v in row.items()})

    def final_phi_json(self) -> dict:
        last = self.steps[-1]
        return dict(t=last.t, c=last.c, s=self.setting.grid.nodes.tolist(), phi=last.phi.tolist(),
                    status=self.status)

    # -- identities along the trace ------------------------------------------

    def monotonicity_defect(self) -> float:
        """Largest decrease of I_tilde - J_tilde between recorded steps."""
        g = np.array([s.gap for s in self.steps])
        if len(g) < 2:
            return 0.0
        return float(max(0.0, -np.min(np.diff(g))))

    def identity_defects(self) -> np.ndarray:
        """F_hat(phi_t) + (1/t) int_0^t (I_tilde - J_tilde)(phi_s) ds at every
        recorded t > 0 (cubic Hermite quadrature in t)."""
        ts = np.array([s.t for s in self.steps])
        g = np.array([s.gap for s in self.steps])
        dg = np.array([s.gap_rate for s in self.steps])
        if ts[0] != 0.0:
            raise NumericalError("trace does not start at t = 0")
        h = np.diff(ts)
        pieces = 0.5 * h * (g[:-1] + g[1:]) + h * h / 12.0 * (dg[:-1] - dg[1:])
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        out = []
        for k in range(1, len(ts)):
            out.append(self.steps[k].energies.F_hat + cum[k] / ts[k])
        return np.array(out)


def default_schedule(n: int = 24, t0: float = 0.05) -> List[float]:
    return list(np.geomspace(t0, 1.0, n))


def _escaped(phi, setting: Setting, tol: float = 0.02) -> bool:
    """Mass of omega_phi leaving the truncated line (the radial form of
    C^0 blow-up: the solution drifts toward a pole)."""
    u1 = setting.base.du + setting.grid.d1(phi)
    return bool(u1[0] > tol or 2.0 - u1[-1] > tol)


def _gap_and_rate(phi: SplitPotential, dphi: SplitPotential, setting: Setting, c: float,
                  delta: float = 1e-4, n_path: int = 32):
    base = setting.base
    grid = setting.grid

    def gap(p):
        _, _, It, Jt = aubin_yau(p.values(grid), base, c, n_path, p.derivatives(grid))
        return It - Jt

    return gap(phi), (gap(phi.axpy(delta, dphi)) - gap(phi.axpy(-delta, dphi))) / (2 * delta)


def _record(t, res: NewtonResult, setting: Setting, mode: str, with_energies: bool, with_lambda1: bool):
    from .invariants import lambda1 as _lambda1
    sp_phi = res.split
    phi = res.phi
    st = setting.with_c(res.c) if res.c != setting.c else setting
    d1, d2 = sp_phi.derivatives(st.grid)
    energies = energy_report(phi, st, dphi=(d1, d2)) if with_energies else None
    lam = math.nan
    if with_lambda1:
        try:
            lam = _lambda1(st.base.plus(phi, d1, d2), st.c).lambda1
        except NumericalError:
            lam = math.nan
    dphi, _ = tangent(sp_phi, st, t, mode=mode)
    gap, rate = _gap_and_rate(sp_phi, dphi, st, st.c)
    return ContinuityStep(t, phi.copy(), res.residual_sup, energies, lam, float(np.ptp(phi)),
                          float(np.max(np.abs(st.c * d1))), st.c, res.iterations, gap, rate, sp_phi)


def continuity_path(setting: Setting, schedule: Optional[Sequence[float]] = None,
                    settings: Optional[NewtonSettings] = None, min_step: float = 1e-4,
                    osc_limit: float = 1e3, energies: bool = True, lambda1: bool = True,
                    mode: str = "auto", max_step: Optional[float] = 0.05) -> ContinuityTrace:
    """Warm-started continuation from t = 0 through ``schedule`` (increasing,
    in (0, 1]) with adaptive bisection of failing steps.  Steps longer than
    ``max_step`` are subdivided.

    Non-solvability is declared (status ``diverged_at(t)``) when the step
    falls below ``min_step``, when osc(phi) exceeds ``osc_limit`` or when the
    metric mass escapes the truncated line.
    """
    settings = settings or NewtonSettings()
    schedule = default_schedule() if schedule is None else [float(t) for t in schedule]
    if not schedule:
        raise ConfigError("empty t-schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] <= 0 or schedule[-1] > 1:
        raise ConfigError("schedule must increase within (0, 1]")
    if max_step:
        # subdivide long steps so that the recorded trace resolves the
        # t-integral of I_tilde - J_tilde
        fine = []
        prev = 0.0
        for t in schedule:
            k = int(math.ceil((t - prev) / max_step - 1e-12))
            fine.extend(prev + (t - prev) * np.arange(1, k + 1) / k)
            prev = t
        schedule = [float(t) for t in fine]
    field_mode = "field" in mode
    m0 = "field+t0" if field_mode else "t0"
    n = setting.grid.n
    res = newton_solve(np.zeros(n), setting, 0.0, settings, mode=m0)
    steps = [_record(0.0, res, setting, m0, energies, lambda1)]
    attempted = [0.0]
    phi, c = res.split, res.c
    t_prev = 0.0
    prev_mode = m0
    status = "completed"
    for target in schedule:
        t_try = target
        while t_prev < target:
            h = t_try - t_prev
            m = mode if mode != "auto" else _select_mode(setting, t_try, "auto")
            attempted.append(t_try)
            try:
                # first-order predictor
                dphi, dc = tangent(phi, setting, t_prev, c=c, mode=prev_mode)
                guess = phi.axpy(h, dphi)
                if np.any(setting.base.d2u + guess.derivatives(setting.grid)[1] <= settings.positivity_floor):
                    guess = phi
                    dc = 0.0
                res = newton_solve(guess, setting, t_try, settings, mode=m, c0=c + h * dc)
                if np.ptp(res.phi) > osc_limit or _escaped(res.phi, setting.with_c(res.c)):
                    raise NonConvergence("solution left the admissible range")
            except NumericalError:
                if h / 2 < min_step:
                    status = f"diverged_at({t_try:.6g})"
                    break
                t_try = t_prev + h / 2
                continue
            steps.append(_record(t_try, res, setting, m, energies, lambda1))
            phi, c = res.split, res.c
            t_prev = t_try
            prev_mode = m
            t_try = target
        if status != "completed":
            break
    return ContinuityTrace(steps, attempted, status, setting)


# ---------------------------------------------------------------------------
# smoothing flow

@dataclass
class FlowReport:
    u1_sup: float
    bound: float
    h_theta_sup: float
    dt: float
    steps: int
    dt_halving_change: float
    holder_seminorm: float

    def to_json(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def _flow_run(setting: Setting, horizon: float, dt: float, blowup: float = 1e3):
    """Linearly implicit Euler for d phi/dt = r(phi) on the interior nodes;
    the two tail rows stay algebraic constraints (the Robin conditions)."""
    n = setting.grid.n
    phi = np.zeros(n)
    mass = np.ones(n)
    mass[0] = mass[-1] = 0.0
    M = sp.diags(mass)
    t = 0.0
    steps = 0
    while t < horizon - 1e-14:
        h = min(dt, horizon - t)
        while True:
            try:
                r = residual(phi, setting, 1.0)
                J, _, _ = jacobian(phi, setting, 1.0)
                # zero mass on the end rows turns them into J dphi = -r
                new = phi + spsolve((M - h * J).tocsc(), h * r)
                residual(new, setting, 1.0)
                ok = np.all(np.isfinite(new))
            except PositivityError:
                ok = False
            if ok:
                break
            h *= 0.5
            if h < 1e-8:
                raise NumericalError("flow step underflow")
        phi = new
        t += h
        steps += 1
        if np.max(np.abs(phi)) > blowup:
            raise NumericalError("smoothing flow blew up (sup|u| > 1e3)")
    return phi, steps


def flow_smooth(setting: Setting, horizon: float = 1.0, dt: float = 1e-2):
    """Run the twisted Kähler-Ricci flow for time ``horizon`` from the base
    metric of ``setting``; returns (u1, FlowReport).

    u1 is the potential at the final time; the report compares sup|u1| with
    (e^beta/beta) sup|h0 - theta_X| and records the change under dt/2.
    """
    if dt <= 0 or horizon <= 0:
        raise ConfigError("dt and horizon must be positive")
    u1, steps = _flow_run(setting, horizon, dt)
    u1h, _ = _flow_run(setting, horizon, dt / 2)
    hth = setting.h0 - setting.theta0()
    hsup = float(np.max(np.abs(hth)))
    beta = setting.beta
    # Holder-1/2 seminorm of h - theta at the final metric along the meridian
    from .functionals import ricci_potential_of
    from .geometry import meridian_metrics
    st = setting
    hf = ricci_potential_of(u1, st) - (st.theta0() + st.c * st.grid.d1(u1))
    mer = meridian_metrics(st.base.plus(u1))
    x = mer.arclength
    idx = np.linspace(0, len(x) - 1, 200).astype(int)
    dx = np.abs(x[idx][:, None] - x[idx][None, :])
    dh = np.abs(hf[idx][:, None] - hf[idx][None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dx > 1e-6, dh / np.sqrt(dx), 0.0)
    rep = FlowReport(float(np.max(np.abs(u1))), float(math.exp(beta) / beta * hsup), hsup, dt, steps,
                     float(np.max(np.abs(u1 - u1h))), float(np.max(q)))
    return u1, rep


# ---------------------------------------------------------------------------
# R-invariant

def r_invariant(c: float, grid=None, settings: Optional[NewtonSettings] = None, beta_tol: float = 0.01,
                schedule=None):
    """Bisection on beta in (0, 1] for solvability of the continuity path with
    eta = (1 - beta) omega0 and X = c z d/dz.  Returns (R, (lo, hi))."""
    if beta_tol < 1e-3:
        raise ConfigError("beta_tol must be >= 1e-3")
    grid = grid or build_grid(512, 12.0)
    schedule = schedule or default_schedule(16, 0.05)

    def solvable(beta):
        st = fs_setting(grid, beta, c)
        tr = continuity_path(st, schedule, settings, energies=False, lambda1=False)
        return tr.completed

    if solvable(1.0):
        return 1.0, (1.0, 1.0)
    lo, hi = 0.0, 1.0
    # lower end: find a solvable beta
    b = 0.5
    while not solvable(b):
        hi = b
        b *= 0.5
        if b < 1e-3:
            raise NumericalError("no solvable beta found")
    lo = b
    while hi - lo > beta_tol:
        mid = 0.5 * (lo + hi)
        if solvable(mid):
            lo = mid
        else:
            hi = mid
    R = 0.5 * (lo + hi)
    if not (0.0 < R <= 1.0):
        raise NumericalError("R estimate left (0, 1]")
    return R, (lo, hi)


def r_invariant_exact(c: float) -> float:
    """Closed form on the model: with m(c) the barycenter of tau under
    e^{c tau} dtau on [0, 2], R = 1/(1 + |m - 1|)."""
    if c == 0.0:
        return 1.0
    m = 1.0 / math.tanh(c) - 1.0 / c + 1.0
    return 1.0 / (1.0 + abs(m - 1.0))


def r_sweep(cs: Sequence[float], **kw):
    """R estimates over a c-sweep with a monotone-trend report (trend in |c|)."""
    rows = []
    for c in cs:
        R, br = r_invariant(c, **kw)
        rows.append(dict(c=float(c), R=R, lo=br[0], hi=br[1], exact=r_invariant_exact(c)))
    tol = kw.get("beta_tol", 0.01)
    order = sorted(rows, key=lambda r: abs(r["c"]))
    mono = all(b["R"] <= a["R"] + tol for a, b in zip(order, order[1:]))
    return dict(rows=rows, monotone=mono)
