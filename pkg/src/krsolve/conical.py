"""Conical solitons as limits of regularized twisted solitons.

For eps > 0 the twist nu*eta_eps with eta_eps = lambda omega0 + i ddbar
log(|s|^2_H + eps^2) is smooth and the equation is solved at gamma = 1 -
lambda nu.  The path runs eps from 1 down to the smallest scheduled value,
warm-starting each solve; the limit carries a cone of angle 2 pi (1 - nu) at
the divisor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, NonConvergence
from .functionals import (log_functionals, regularized_setting, k_energy_twisted, properness_gap_constant)
from .geometry import (DivisorModel, RadialPotential, VOLUME, TWO_PI, divisor_weight, integrate,
                       meridian_metrics, theta_shift, make_divisor)
from .oracle import soliton_coefficient
from .solver import NewtonSettings, SplitPotential, continuity_path, newton_solve
from .twist import select_k, smoothing_reference

CONICAL_TRACE_COLUMNS = ("epsilon", "residual_sup", "diameter", "mu_log", "F_log", "cone_slope_est")


def default_epsilons(n: int = 17, smallest: float = 1e-4) -> List[float]:
    return [float(e) for e in np.geomspace(1.0, smallest, n)]


@dataclass
class RegularizationSchedule:
    epsilons: List[float]
    k: float
    nu: float
    lam: float
    gamma_ratio: float = 0.0     # min over eps of omega_eps / omega0

    def __post_init__(self):
        eps = list(self.epsilons)
        if not eps:
            raise ConfigError("empty epsilon schedule")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons must be positive and decreasing")
        if not (0.0 < self.nu < 1.0):
            raise ConfigError("nu outside (0,1)")
        if not self.k > 0:
            raise ConfigError("k must be positive")

    @classmethod
    def build(cls, nu: float, divisor: DivisorModel, u0: RadialPotential,
              epsilons: Optional[Sequence[float]] = None) -> "RegularizationSchedule":
        eps = default_epsilons() if epsilons is None else [float(e) for e in epsilons]
        if not eps:
            raise ConfigError("empty epsilon schedule")
        D = divisor if divisor.log_weight is not None else divisor_weight(divisor, u0, nu)
        k, ratio = select_k(eps, nu, D, u0)
        return cls(eps, k, nu, divisor.lam, ratio)


@dataclass
class ConicalStep:
    epsilon: float
    phi: np.ndarray = field(repr=False)
    c: float
    residual_sup: float
    iterations: int
    diameter: float
    mu_log: float
    F_log: float
    cone_slope_est: float
    alpha_inf_est: float
    area: float
    mu_reg: float
    mu_reg_bound: float
    ratio_min: float        # min of omega_phi / omega_eps
    ratio_max: float
    F_eps_osc: float        # osc of log[(omega_eps/omega0)(|s|^2+eps^2)^nu]
    x_sup: float            # sup |X|_{omega_phi}
    split: Optional[SplitPotential] = field(default=None, repr=False)


@dataclass
class ConicalSolution:
    phi: np.ndarray = field(repr=False)
    u: RadialPotential = field(repr=False)
    c: float
    cone_slope: float
    cone_slope_linear: float
    alpha_inf: float
    trace: List[ConicalStep]
    status: str
    nu: float
    divisor: DivisorModel = field(repr=False)
    schedule: RegularizationSchedule = field(repr=False)
    gamma: float = 0.0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def laplacian_constant(self) -> float:
        """Smallest A with A^-1 omega_eps <= omega_phi_eps <= A omega_eps over the trace."""
        return float(max(max(1.0 / s.ratio_min, s.ratio_max) for s in self.trace))

    def diameters(self) -> np.ndarray:
        return np.array([s.diameter for s in self.trace])

    def cauchy_gaps(self) -> np.ndarray:
        return np.abs(np.diff(self.diameters()))

    def rows(self):
        return [dict(epsilon=s.epsilon, residual_sup=s.residual_sup, diameter=s.diameter,
                     mu_log=s.mu_log, F_log=s.F_log, cone_slope_est=s.cone_slope_est) for s in self.trace]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CONICAL_TRACE_COLUMNS)
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(float(v)) for k, v in row.items()})

    def holder_exponent(self, window=None) -> float:
        """Empirical exponent of |phi(s) - phi(pole)| against the omega0
        distance to the cone pole (reported only)."""
        g = self.u.grid
        s = g.nodes
        at_zero = self.divisor.has_zero
        lo, hi = window or ((-g.s_max, -g.s_max / 2) if at_zero else (g.s_max / 2, g.s_max))
        m = (s >= lo) & (s <= hi)
        from .geometry import fs_potential
        mer0 = meridian_metrics(fs_potential(g))
        d0 = mer0.arclength
        # pole value of phi: continue u' ~ e^{alpha s}, u0' ~ e^s into the tail
        a = self.cone_slope
        u0 = fs_potential(g)
        if at_zero:
            pole = self.phi[0] - self.u.du[0] / a + u0.du[0]
        else:
            d0 = mer0.diameter - d0
            pole = self.phi[-1] - (2.0 - self.u.du[-1]) / a + (2.0 - u0.du[-1])
        dphi = np.abs(self.phi - pole)
        ok = m & (dphi > 0) & (d0 > 0)
        return float(np.polyfit(np.log(d0[ok]), np.log(dphi[ok]), 1)[0])


def cone_slope_fit(u: RadialPotential, end: int = 0, window=None, corrected: bool = True) -> float:
    """Asymptotic rate alpha of u'' ~ e^{alpha s} (end 0) or e^{-alpha s}
    (end -1), by least squares on the outer half of the line.

    With ``corrected`` the fit of log u'' also carries the terms tau and
    tau^2 (tau = u' or 2 - u'), the leading corrections of the cone
    expansion v(tau) = alpha tau (1 + k tau + ...).
    """
    s = u.grid.nodes
    smax = u.grid.s_max
    if window is None:
        window = (-smax, -smax / 2) if end == 0 else (smax / 2, smax)
    m = (s >= window[0]) & (s <= window[1])
    y = np.log(u.d2u[m])
    if corrected:
        tau = u.du[m] if end == 0 else 2.0 - u.du[m]
        A = np.column_stack([s[m], np.ones(m.sum()), tau, tau * tau])
    else:
        A = np.column_stack([s[m], np.ones(m.sum())])
    coef = np.linalg.lstsq(A, y, rcond=None)[0][0]
    return float(coef if end == 0 else -coef)


def default_coefficient(nu: float, divisor: DivisorModel) -> float:
    """c of the closed-form limit: c(nu) for a cone at 0, -c(nu) at inf
    (s -> -s), 0 for the symmetric football."""
    if divisor.has_zero and divisor.has_inf:
        return 0.0
    c, _, _ = soliton_coefficient(nu)
    return c if divisor.has_zero else -c


def _step_record(eps, res, u0: RadialPotential, nu, D: DivisorModel, sched: RegularizationSchedule,
                 gamma: float) -> ConicalStep:
    g = u0.grid
    sp_phi = res.split
    d1, d2 = sp_phi.derivatives(g)
    phi = res.phi
    u = u0.plus(phi, d1, d2)
    c = res.c
    mer = meridian_metrics(u, tail_tol=0.1)
    mu_log, F_log = log_functionals(phi, u0, nu, D, c, dphi=(d1, d2))
    st = regularized_setting(u0, nu, D, eps, c)
    mu_reg = k_energy_twisted(phi, st, dphi=(d1, d2))
    th = c * u0.du + theta_shift(c)
    bound = integrate((st.h0 - th) * np.exp(th), u0) / VOLUME
    _, _, dens_eps = smoothing_reference(eps, nu, sched.k, D, u0)
    ratio = u.d2u / dens_eps
    F_eps = np.log(dens_eps / u0.d2u) + nu * np.logaddexp(D.log_weight, 2 * np.log(eps))
    a0 = cone_slope_fit(u, 0) if D.has_zero else cone_slope_fit(u, -1)
    ai = cone_slope_fit(u, -1) if D.has_zero else cone_slope_fit(u, 0)
    return ConicalStep(eps, phi.copy(), c, res.residual_sup, res.iterations, mer.diameter, mu_log, F_log,
                       a0, ai, integrate(1.0, u), mu_reg, float(bound), float(ratio.min()),
                       float(ratio.max()), float(np.ptp(F_eps)), float(abs(c) * np.max(np.sqrt(2 * u.d2u))),
                       sp_phi)


def solve_conical(base: RadialPotential, nu: float, divisor: DivisorModel, c: Optional[float] = None,
                  schedule: Optional[RegularizationSchedule] = None,
                  settings: Optional[NewtonSettings] = None, max_refine: int = 6) -> ConicalSolution:
    """eps-path for the regularized twisted equation at gamma = 1 - lambda nu.

    Unless the divisor is the symmetric pair {0, inf} (where c = 0), the
    vector field coefficient is solved for together with phi: at eps > 0 a
    fixed c admits no solution (the weighted balance of the twist only
    closes in the limit), so each step returns its own c_eps, with
    c_eps -> c(nu).  ``c`` is the starting value (oracle value by default).
    A failing eps-step is refined geometrically up to ``max_refine`` times.
    """
    if not (0.0 < nu < 1.0):
        raise ConfigError(f"nu={nu} outside (0,1)")
    settings = settings or NewtonSettings()
    D = divisor if divisor.log_weight is not None else divisor_weight(divisor, base, nu)
    sched = schedule or RegularizationSchedule.build(nu, D, base)
    gamma = 1.0 - D.lam * nu
    symmetric = D.has_zero and D.has_inf
    c0 = default_coefficient(nu, D) if c is None else float(c)
    mode = "plain" if (symmetric and c0 == 0.0) else "field"
    eps_list = list(sched.epsilons)
    st = regularized_setting(base, nu, D, eps_list[0], c0)
    try:
        res = newton_solve(np.zeros(base.grid.n), st, 1.0, settings, mode=mode, c0=c0)
    except NumericalError:
        tr = continuity_path(st, settings=settings, energies=False, lambda1=False, mode=mode)
        if not tr.completed:
            raise NonConvergence(f"no regularized solution at eps={eps_list[0]}: {tr.status}")
        last = tr.steps[-1]
        res = newton_solve(last.split, st, 1.0, settings, mode=mode, c0=last.c)
    trace = [_step_record(eps_list[0], res, base, nu, D, sched, gamma)]
    status = "completed"
    prev_eps = eps_list[0]
    for eps in eps_list[1:]:
        targets = [eps]
        depth = 0
        while targets:
            e = targets[0]
            st = regularized_setting(base, nu, D, e, res.c)
            try:
                new = newton_solve(res.split, st, 1.0, settings, mode=mode, c0=res.c)
            except NumericalError:
                depth += 1
                if depth > max_refine:
                    status = f"diverged_at({e:.6g})"
                    break
                targets.insert(0, math.sqrt(prev_eps * e))
                continue
            res = new
            prev_eps = e
            targets.pop(0)
            if not targets:
                trace.append(_step_record(e, res, base, nu, D, sched, gamma))
        if status != "completed":
            break
    last = trace[-1]
    u = base.plus(last.phi, *last.split.derivatives(base.grid))
    end0 = 0 if D.has_zero else -1
    end1 = -1 if D.has_zero else 0
    sol = ConicalSolution(last.phi, u, last.c, cone_slope_fit(u, end0), cone_slope_fit(u, end0, corrected=False),
                          cone_slope_fit(u, end1), trace, status, nu, D, sched, gamma)
    return sol


def current_limit_check(sol: ConicalSolution, test_functions: Optional[Sequence] = None, tol: float = 1e-2):
    """Pair both sides of Ric(omega) = gamma omega + nu [D] + L_X omega with
    radial test functions zeta(s).

    Left side (zeta constant near the poles):
        2 pi (zeta(cone pole) + int (log u'')' zeta' ds),
    from Ric = -i ddbar log(u'' e^{-s}) in the chart centred at the cone
    (z, or w = 1/z when the cone sits at infinity; the two sign changes of
    s -> -s cancel in the integral).  Right side:
        2 pi (gamma int zeta u'' ds - c int u'' zeta' ds) + 2 pi nu zeta(cone),
    using int L_X omega ^ zeta = -int omega ^ L_X zeta.  Default test
    functions: two bumps away from the cone and one cut-off that equals 1
    near the cone; for the latter the recovered delta mass is reported.
    """
    u = sol.u
    g = u.grid
    s = g.nodes
    nu, gamma, c = sol.nu, sol.gamma, sol.c
    cone_at_zero = sol.divisor.has_zero
    if sol.divisor.has_zero and sol.divisor.has_inf:
        cone_at_zero = True
    flip = 1.0 if cone_at_zero else -1.0

    def bump(a, b):
        x = np.clip((s - a) / (b - a), 0.0, 1.0)
        return np.where((x > 0) & (x < 1), np.exp(-1.0 / np.maximum(x * (1 - x), 1e-300)) * math.e ** 4, 0.0)

    def cutoff(a, b):
        # smooth step: 1 for flip*s < a, 0 for flip*s > b
        x = np.clip((flip * s - a) / (b - a), 0.0, 1.0)
        f = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
        h = np.where(x < 1, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
        return h / (f + h)

    if test_functions is None:
        test_functions = [("bump(-2,3)", bump(-2.0, 3.0), False), ("bump(1,6)", bump(1.0, 6.0), False),
                          ("cutoff(-3,2)", cutoff(-3.0, 2.0), True)]
    dlog = g.d1(np.log(u.d2u))
    items = []
    failures = []
    for name, zeta, at_cone in test_functions:
        zeta = np.asarray(zeta, float)
        dz = g.d1(zeta)
        # zeta(-inf) in the z chart; with the cone at inf use the w = 1/z chart
        z_end = zeta[0] if cone_at_zero else zeta[-1]
        lhs = TWO_PI * (z_end + _int(dlog * dz, g))
        # int zeta omega carries the exact metric mass beyond the truncation
        smooth_rhs = gamma * integrate(zeta, u) - TWO_PI * c * _int(u.d2u * dz, g)
        delta = TWO_PI * nu * z_end
        rhs = smooth_rhs + delta
        mismatch = abs(lhs - rhs) / max(abs(lhs), 1e-12)
        item = dict(name=name, lhs=lhs, rhs=rhs, rel_mismatch=mismatch)
        if at_cone:
            item["delta_mass"] = lhs - smooth_rhs
            item["delta_mass_expected"] = TWO_PI * nu
            item["delta_mass_error"] = abs(item["delta_mass"] - TWO_PI * nu)
            if item["delta_mass_error"] > tol:
                failures.append(f"{name}: delta mass off by {item['delta_mass_error']:.3e}")
        if mismatch > tol:
            failures.append(f"{name}: relative mismatch {mismatch:.3e}")
        items.append(item)
    return dict(items=items, failures=failures)


def _int(f, grid):
    from .geometry import integrate_ds
    return integrate_ds(f, grid, tails=False)
