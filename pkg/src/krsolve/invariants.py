"""Spectral, non-collapsing, alpha-invariant, cone-window and
Moser-Trudinger diagnostics on the radial model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigError, NumericalError
from ._kernels import geodesic_ball_volumes
from .geometry import (RadialPotential, Grid, VOLUME, TWO_PI, integrate, theta_shift, build_grid,
                       fs_potential, meridian_metrics)


@dataclass
class SpectralReport:
    lambda1: float
    eigenfunction: np.ndarray = field(repr=False)
    a_omega: Optional[float] = None
    smoothing_constant: Optional[float] = None
    raw: tuple = ()

    def to_json(self):
        out = dict(lambda1=self.lambda1)
        if self.a_omega is not None:
            out["a_omega"] = self.a_omega
        if self.smoothing_constant is not None:
            out["smoothing_constant"] = self.smoothing_constant
        return out


def _sl_eigen(s, du, d2u, c, k=2):
    """Lowest k eigenpairs of -(e^theta f')' = lam e^theta u'' f with natural
    end conditions, by finite volumes on the nodes s."""
    n = len(s)
    h = np.diff(s)
    w = np.empty(n)
    w[1:-1] = 0.5 * (s[2:] - s[:-2])
    w[0] = 0.5 * h[0]
    w[-1] = 0.5 * h[-1]
    th = c * du + theta_shift(c)
    eth = np.exp(th - th.max())
    kap = 0.5 * (eth[1:] + eth[:-1]) / h
    m = w * eth * d2u
    # lump the metric mass beyond the truncation onto the end nodes
    m[0] += eth[0] * du[0]
    m[-1] += eth[-1] * (2.0 - du[-1])
    diag = np.zeros(n)
    diag[:-1] += kap
    diag[1:] += kap
    rs = 1.0 / np.sqrt(m)
    d = diag * rs * rs
    e = -kap * rs[1:] * rs[:-1]
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    return vals, vecs * rs[:, None]


def lambda1(u: RadialPotential, X=0.0, richardson: bool = True) -> SpectralReport:
    """First nonzero eigenvalue of the weighted Laplacian Delta + X acting on
    S^1-invariant functions, with the Rayleigh quotient
    int |df|^2 e^theta omega / int f^2 e^theta omega (constants removed).

    Second order on each grid; with ``richardson`` the estimate is
    extrapolated against the grid made of every other node.
    """
    c = X.c if hasattr(X, "c") else float(X)
    if np.any(u.d2u <= 0):
        raise NumericalError("lambda1 needs a positive metric")
    s = u.grid.nodes
    vals, vecs = _sl_eigen(s, u.du, u.d2u, c)
    if vals[1] - vals[0] < 1e-8 * max(abs(vals[1]), 1.0) or vals[1] <= 0:
        raise NumericalError("discrete spectrum degenerate")
    lam = float(vals[1])
    raw = (lam,)
    if richardson:
        vc, _ = _sl_eigen(s[::2], u.du[::2], u.d2u[::2], c)
        if len(s) % 2 == 1:
            lam_c = float(vc[1])
            lam = (4.0 * lam - lam_c) / 3.0
            raw = (float(vals[1]), lam_c)
        else:
            # even node count: the subgrid misses the last node; use the
            # symmetric drop of both ends instead
            vc, _ = _sl_eigen(s[1::2], u.du[1::2], u.d2u[1::2], c)
            lam_c = float(vc[1])
            lam = (4.0 * lam - lam_c) / 3.0
            raw = (float(vals[1]), lam_c)
    f = vecs[:, 1]
    th = c * u.du + theta_shift(c)
    nrm = math.sqrt(integrate(f * f * np.exp(th), u) / VOLUME)
    f = f / nrm
    return SpectralReport(lam, f, raw=raw)


# ---------------------------------------------------------------------------
# non-collapsing constant

def _revolution_profile(u: RadialPotential, c: float):
    """Arclength x from the pole at s = -inf, circle radius rho = sqrt(2u''),
    rho_x, Gauss curvature and the weight e^theta, with the poles appended."""
    mer = meridian_metrics(u)
    g = u.grid
    d3 = g.d1(u.d2u)
    rho = np.sqrt(2.0 * u.d2u)
    drho = d3 / u.d2u
    lu = np.log(u.d2u)
    gauss = -g.d2(lu) / u.d2u
    th = c * u.du + theta_shift(c)
    x = np.concatenate([[0.0], mer.arclength, [mer.diameter]])
    rho = np.concatenate([[0.0], rho, [0.0]])
    drho = np.concatenate([[drho[0]], drho, [drho[-1]]])
    gauss = np.concatenate([[gauss[0]], gauss, [gauss[-1]]])
    wt = np.exp(np.concatenate([[theta_shift(c)], th, [2.0 * c + theta_shift(c)]]))
    return x, rho, drho, gauss, wt


def ball_volumes(u: RadialPotential, X=0.0, centers=None, radii=None, n_dir: int = 64, h: float = 1e-3):
    """Weighted areas int_{B_r(x)} e^theta omega for centers given by their
    meridian distance from the pole at s = -inf (poles allowed).

    Returns (centers, radii, vols) with vols[i, j] for center i, radius j.
    """
    c = X.c if hasattr(X, "c") else float(X)
    x, rho, drho, gauss, wt = _revolution_profile(u, c)
    diam = x[-1]
    radii = np.linspace(0.1, 1.0, 10) if radii is None else np.asarray(radii, float)
    centers = np.linspace(0.0, diam, 9) if centers is None else np.asarray(centers, float)
    # pole balls are geodesic caps: integrate the ring areas directly
    xf = np.linspace(0.0, diam, 4097)
    ring = TWO_PI * np.interp(xf, x, rho) * np.interp(xf, x, wt)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ring[1:] + ring[:-1]) * np.diff(xf))])
    vols = np.empty((len(centers), len(radii)))
    for i, x0 in enumerate(centers):
        if x0 <= 1e-12:
            vols[i] = np.interp(np.minimum(radii, diam), xf, cum)
        elif x0 >= diam - 1e-12:
            vols[i] = cum[-1] - np.interp(np.maximum(diam - radii, 0.0), xf, cum)
        else:
            vols[i] = geodesic_ball_volumes(x, rho, drho, gauss, wt, x0, radii, n_dir=n_dir, h=h)
    return centers, radii, vols


def noncollapse_a(u: RadialPotential, X=0.0, radii=None, n_centers: int = 9, **kw) -> float:
    """a(omega) = min over radii in [0.1, 1] and meridian centers of the
    weighted ball area divided by r^2."""
    centers = np.linspace(0.0, meridian_metrics(u).diameter, n_centers)
    _, radii, vols = ball_volumes(u, X, centers, radii, **kw)
    return float(np.min(vols / radii[None, :] ** 2))


def smoothing_constant(beta, V, c1, n, a, lambda1) -> float:
    """e^beta (1 + sqrt(2 V (c1 + n) / (a lambda1)))."""
    if a <= 0 or lambda1 <= 0:
        raise ConfigError("a and lambda1 must be positive")
    return float(math.exp(beta) * (1.0 + math.sqrt(2.0 * V * (c1 + n) / (a * lambda1))))


# ---------------------------------------------------------------------------
# alpha-invariant estimate

@dataclass
class AlphaEstimate:
    alpha: float                 # largest grid alpha with bounded integrals
    bracket: tuple               # (alpha, next grid value)
    alphas: np.ndarray = field(repr=False)
    growth: np.ndarray = field(repr=False)   # I(R_max) / I(R_max / 2) per alpha

    def to_json(self):
        return dict(alpha_estimate=self.alpha, bracket=list(self.bracket))


def _extend(f, s_in, s_out):
    """Continue f linearly beyond the ends of s_in using the end slopes."""
    k0 = (f[1] - f[0]) / (s_in[1] - s_in[0])
    k1 = (f[-1] - f[-2]) / (s_in[-1] - s_in[-2])
    out = np.interp(s_out, s_in, f)
    lo = s_out < s_in[0]
    hi = s_out > s_in[-1]
    out[lo] = f[0] + k0 * (s_out[lo] - s_in[0])
    out[hi] = f[-1] + k1 * (s_out[hi] - s_in[-1])
    return out


def concentrating_family(s, R_values, pole: str = "0"):
    """omega0-psh potentials phi_R = log(e^{-2R} + (1 + e^{-s})^{-2}) (pole 0)
    or the mirror image (pole inf): smoothed log poles of full mass, cut off
    at level -2R.  u0 + phi_R is a log-sum-exp of convex functions."""
    sg = s if pole == "0" else -s
    t = -2.0 * np.logaddexp(0.0, -sg)
    return [np.logaddexp(-2.0 * R, t) for R in R_values]


def alpha_lower_bound(base: RadialPotential, divisor=None, exponent_weight: float = 0.0,
                      family_size: int = 24, R_max: float = 60.0, growth_tol: float = 1.5,
                      alphas=None) -> AlphaEstimate:
    """Empirical threshold of
        sup_R (1/V) int e^{-alpha (phi_R - sup phi_R)} omega0 / |s|_H^{2 exponent_weight}
    over the concentrating family, on alpha in {0.05, ..., 2.0}.

    An alpha counts as bounded when the integral at R_max exceeds the one at
    R_max / 2 by less than ``growth_tol``.  Finite families bias the estimate
    high.  Outside the base grid log u0'' and log|s|^2_H are continued
    linearly (cone tails).
    """
    alphas = np.round(np.arange(0.05, 2.0001, 0.05), 10) if alphas is None else np.asarray(alphas, float)
    s_in = base.grid.nodes
    S = 2.0 * R_max + 40.0
    s = np.linspace(-S, S, 40001)
    ds = s[1] - s[0]
    logdens = _extend(np.log(base.d2u), s_in, s)
    if divisor is not None and exponent_weight:
        if divisor.log_weight is None:
            raise ConfigError("divisor needs its weight (divisor_weight)")
        logdens = logdens - exponent_weight * _extend(divisor.log_weight, s_in, s)
    Rs = np.linspace(0.0, R_max, family_size)
    half = Rs <= 0.5 * R_max + 1e-12
    fams = [concentrating_family(s, Rs, p) for p in ("0", "inf")]
    growth = np.empty(len(alphas))
    for k, a in enumerate(alphas):
        worst = 1.0
        for fam in fams:
            vals = np.empty(len(Rs))
            for j, phi in enumerate(fam):
                e = -a * (phi - phi.max()) + logdens
                m = e.max()
                vals[j] = m + math.log(np.sum(np.exp(e - m)) * ds * TWO_PI / VOLUME)
            # sup over the family against the sup over its first half
            worst = max(worst, math.exp(vals.max() - vals[half].max()))
        growth[k] = worst
    ok = growth < growth_tol
    if not ok[0]:
        return AlphaEstimate(0.0, (0.0, float(alphas[0])), alphas, growth)
    idx = int(np.argmin(ok)) - 1 if not ok.all() else len(alphas) - 1
    hi = float(alphas[idx + 1]) if idx + 1 < len(alphas) else float("inf")
    return AlphaEstimate(float(alphas[idx]), (float(alphas[idx]), hi), alphas, growth)


# ---------------------------------------------------------------------------
# cone window

@dataclass
class ConeWindow:
    beta_min: float
    beta_max: float
    inputs: tuple
    reasons: List[str] = field(default_factory=list)
    r_one: Optional["ConeWindow"] = None

    @property
    def empty(self) -> bool:
        return bool(self.reasons) or not self.beta_min < self.beta_max

    def to_json(self):
        out = dict(window=dict(beta_min=self.beta_min, beta_max=self.beta_max), empty=self.empty,
                   inputs=dict(zip(("lambda", "C_tilde", "alpha0", "alphaD"), self.inputs)),
                   reasons=list(self.reasons))
        if self.r_one is not None:
            out["r_one_window"] = self.r_one.to_json()
        return out


def _empty(inputs, reasons):
    return ConeWindow(float("nan"), float("nan"), inputs, reasons)


def cone_window(lam, C_tilde, alpha0, alphaD, R_equals_one: bool = False) -> ConeWindow:
    """Window of cone parameters beta for which the twisted path is proper:

        max{(1-lam)/(1-C), 0} < beta < min{alpha0/C, lam alphaD/C, 1}.

    With ``R_equals_one`` the window (max{(1-lam)/(1-C), 0}, 1) is attached
    as ``r_one`` when C < lam and min{alpha0, lam alphaD} > max{C(1-lam)/(1-C), 0}.
    """
    inputs = (float(lam), float(C_tilde), float(alpha0), float(alphaD))
    reasons = []
    for name, v in (("lambda", lam), ("C_tilde", C_tilde), ("alpha0", alpha0)):
        if not (0.0 < v <= 1.0):
            reasons.append(f"{name} = {v} outside (0, 1]")
    if not alphaD > 0:
        reasons.append(f"alphaD = {alphaD} must be positive")
    if C_tilde >= 1.0 and not reasons:
        reasons.append("C_tilde must be < 1")
    if reasons:
        w = _empty(inputs, reasons)
        if R_equals_one:
            w.r_one = _empty(inputs, list(reasons))
        return w
    lo = max((1.0 - lam) / (1.0 - C_tilde), 0.0)
    hi = min(alpha0 / C_tilde, lam * alphaD / C_tilde, 1.0)
    w = ConeWindow(lo, hi, inputs)
    if not lo < hi:
        w.reasons.append(f"lower end {lo:.6g} >= upper end {hi:.6g}")
    if R_equals_one:
        why = []
        if not C_tilde < lam:
            why.append("condition C_tilde < lambda fails")
        need = max(C_tilde * (1.0 - lam) / (1.0 - C_tilde), 0.0)
        if not min(alpha0, lam * alphaD) > need:
            why.append(f"min(alpha0, lambda alphaD) = {min(alpha0, lam * alphaD):.6g} <= {need:.6g}")
        w.r_one = ConeWindow(lo, 1.0, inputs, why) if not why else _empty(inputs, why)
    return w


# ---------------------------------------------------------------------------
# Moser-Trudinger fit

@dataclass
class MTFit:
    C1: float
    C2: float
    violations: int
    C1_mu: float
    C2_mu: float
    violations_mu: int
    J: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.C1 > 0 and self.C1_mu > 0 and self.violations == 0 and self.violations_mu == 0

    def to_json(self):
        return dict(mt=dict(C1=self.C1, C2=self.C2), violations=self.violations,
                    mt_mu=dict(C1=self.C1_mu, C2=self.C2_mu), violations_mu=self.violations_mu,
                    family_size=int(len(self.J)))


def potential_family(base: RadialPotential, size: int = 200, seed: int = 0, fill: float = 0.9,
                     concentrating: float = 0.1):
    """Random omega0-psh potentials of small and large energy: sums of sech
    bumps and odd sech*tanh modes, scaled to a random fraction of the largest
    amplitude keeping u0 + phi convex (at most ``fill``), plus a share of
    concentrating profiles (cut-off log poles, level R in [0.5, s_max/2])."""
    rng = np.random.default_rng(seed)
    g = base.grid
    s = g.nodes
    n_conc = int(round(concentrating * size))
    out = []
    for R in rng.uniform(0.5, 0.5 * g.s_max, n_conc):
        pole = "0" if rng.uniform() < 0.5 else "inf"
        out.append(fill * concentrating_family(s, [R], pole)[0])
    while len(out) < size:
        k = rng.integers(1, 4)
        psi = np.zeros_like(s)
        for _ in range(k):
            m = rng.uniform(-4.0, 4.0)
            w = rng.uniform(0.5, 2.5)
            z = (s - m) / w
            psi += rng.normal() / np.cosh(z) + rng.normal() * np.tanh(z) / np.cosh(z)
        d2 = g.d2(psi)
        neg = -d2 / base.d2u
        amax = 1.0 / neg.max() if neg.max() > 0 else 10.0
        amp = fill * min(amax, 10.0) * rng.uniform() ** 2
        out.append(amp * psi)
    return out


def mt_fit(family: Sequence, setting, n_path: int = 32, tol: float = 1e-9) -> MTFit:
    """Fit F_tilde(phi) >= C1 J(phi) - C2 and mu_tilde(phi) >= C1 J_tilde(phi) - C2
    at a converged soliton (the base of ``setting``).

    C2 is anchored at the soliton, C2 = -F(0) (mu(0) = 0), and C1 is the
    largest slope keeping every member above the line; members below the
    anchor by more than ``tol`` are violations and force C1 = 0.
    """
    from .functionals import aubin_yau, ding_twisted, k_energy_twisted
    base = setting.base
    c = setting.c
    F0, _ = ding_twisted(np.zeros(base.grid.n), setting, n_path)
    Js, Jts, Fs, mus = [], [], [], []
    for phi in family:
        phi = np.asarray(phi, float)
        _, J, _, Jt = aubin_yau(phi, base, c, n_path)
        Js.append(J)
        Jts.append(Jt)
        Fs.append(ding_twisted(phi, setting, n_path)[0])
        mus.append(k_energy_twisted(phi, setting, n_path))
    Js, Jts, Fs, mus = map(np.array, (Js, Jts, Fs, mus))

    def fit(J, F, anchor):
        gap = F - anchor
        viol = int(np.sum(gap < -tol))
        m = J > 1e-8     # tiny J: the ratio is rounding noise
        C1 = float(np.min(gap[m] / J[m])) if m.any() else 0.0
        if viol or C1 <= 0:
            C1 = 0.0
        return C1, float(-anchor) + 0.0, viol

    C1, C2, v = fit(Js, Fs, F0)
    C1m, C2m, vm = fit(Jts, mus, 0.0)
    return MTFit(C1, C2, v, C1m, C2m, vm, Js, Fs, mus)


# ---------------------------------------------------------------------------
# convergence along the eps-path

def _trend_ok(x, slack: float = 1e-12) -> bool:
    """Cauchy-type trend: the last entry is below the first and no entry
    exceeds the running max of the earlier ones."""
    x = np.asarray(x, float)
    if len(x) < 2:
        return True
    return bool(x[-1] < x[0] and np.all(x[1:] <= np.maximum.accumulate(x)[:-1] * (1 + slack) + slack))


def convergence_diagnostics(sol, beta: Optional[float] = None, window: Optional[float] = None) -> dict:
    """Per-eps sup|X|, diameters and density gaps on |s| <= s_max/2 for a
    conical trace, with trend checks.

    Density gaps compare consecutive decades of eps when the schedule allows
    (every step otherwise).
    """
    g = sol.u.grid
    s = g.nodes
    window = 0.5 * g.s_max if window is None else window
    m = np.abs(s) <= window
    base = sol.u.plus(-sol.phi)      # omega0 profile
    eps = np.array([st.epsilon for st in sol.trace])
    xs = np.array([st.x_sup for st in sol.trace])
    diam = sol.diameters()
    dens = [base.d2u + (st.split.derivatives(g)[1] if st.split is not None else g.d2(st.phi))
            for st in sol.trace]
    # steps at whole decades of eps
    dec = np.log10(eps)
    pick = [i for i, d in enumerate(dec) if abs(d - round(d)) < 1e-9]
    if len(pick) < 3:
        pick = list(range(len(eps)))
    gaps = np.array([np.max(np.abs(dens[j][m] - dens[i][m])) for i, j in zip(pick, pick[1:])])
    cgaps = sol.cauchy_gaps()
    failures = []
    if not np.all(np.isfinite(xs)) or (len(xs) > 2 and xs[-1] > 10.0 * max(xs[0], 1e-300) + 1e-12):
        failures.append("sup|X| not bounded along the path")
    if not _trend_ok(gaps):
        failures.append("density gaps not decreasing")
    if len(cgaps) >= 2 and not cgaps[-1] < cgaps[0]:
        failures.append("diameters not Cauchy-trending")
    out = dict(epsilon=eps.tolist(), x_sup=xs.tolist(), diameter=diam.tolist(),
               cauchy_gaps=cgaps.tolist(), density_gap_eps=[float(eps[j]) for j in pick[1:]],
               density_gaps=gaps.tolist(), failures=failures)
    if beta is not None:
        out["beta"] = float(beta)
        out["diam_sqrt_beta"] = float(diam[-1] * math.sqrt(beta))
    return out


def diameter_sweep(betas=(0.5, 0.75, 1.0), grid: Optional[Grid] = None, epsilons=None) -> dict:
    """diam * sqrt(beta) at c = 0: the round sphere for beta = 1, the football
    with cones of angle 2 pi beta at both poles otherwise (nu = 1 - beta)."""
    from .conical import solve_conical, RegularizationSchedule
    from .geometry import make_divisor, divisor_weight
    grid = grid or build_grid(1024, 12.0)
    u0 = fs_potential(grid)
    rows = []
    for b in betas:
        if b >= 1.0:
            d = meridian_metrics(u0).diameter
        else:
            nu = 1.0 - b
            D = divisor_weight(make_divisor(["0", "inf"]), u0, nu)
            sched = RegularizationSchedule.build(nu, D, u0, epsilons)
            sol = solve_conical(u0, nu, D, schedule=sched)
            if not sol.completed:
                raise NumericalError(f"eps-path failed at beta = {b}")
            d = sol.trace[-1].diameter
        rows.append(dict(beta=float(b), diameter=float(d), diam_sqrt_beta=float(d * math.sqrt(b))))
    vals = [r["diam_sqrt_beta"] for r in rows]
    return dict(rows=rows, C=float(max(vals)), spread=float(max(vals) - min(vals)))
