"""Energy functionals on S^1-invariant potentials.

Conventions: omega = u'' ds ^ dtheta, V = 4 pi and, for radial f and g,
int_M i df ^ dbar g = 2 pi int f' g' ds.  theta_X(omega_phi) = theta_X + c phi'.
Path integrals in t use Gauss-Legendre nodes on [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError, PositivityError, ConfigError
from .geometry import (RadialPotential, DivisorModel, VOLUME, TWO_PI, integrate, integrate_ds,
                       theta_shift, divisor_weight)
from .problem import Setting
from .twist import TwistSpec


@dataclass
class EnergyReport:
    I: float
    J: float
    I_tilde: float
    J_tilde: float
    mu_tilde: float
    F_tilde: float
    F_hat: float
    mu_log: Optional[float] = None
    F_log: Optional[float] = None

    def to_json(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items() if v is not None}


def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _derivs(phi, base: RadialPotential, dphi=None):
    phi = np.asarray(phi, dtype=float)
    if dphi is None:
        dphi = base.grid.derivatives(phi)
    return phi, dphi[0], dphi[1]


def _check_path(base: RadialPotential, d2):
    if np.any(base.d2u + d2 <= 0):
        raise PositivityError("omega_phi is not positive: reject phi")


def _ds(g, base):
    return integrate_ds(g, base.grid, True, base.tail_slopes)


# ---------------------------------------------------------------------------
# Aubin-Yau functionals

def aubin_yau(phi, base: RadialPotential, c: float = 0.0, n_path: int = 32, dphi=None):
    """(I, J, I_tilde, J_tilde) along the linear path t phi."""
    if n_path < 16:
        raise ConfigError("n_path must be >= 16")
    phi, d1, d2 = _derivs(phi, base, dphi)
    _check_path(base, d2)
    a = theta_shift(c)
    ub1, ub2 = base.du, base.d2u
    # I = (1/V) int phi (omega0 - omega_phi) = (2pi/V) int -phi phi'' ds
    I = TWO_PI / VOLUME * _ds(-phi * d2, base)
    J = 0.0
    It = TWO_PI / VOLUME * _ds(phi * (np.exp(c * ub1 + a) * ub2
                                      - np.exp(c * (ub1 + d1) + a) * (ub2 + d2)), base)
    ts, ws = _gl(n_path)
    Jt = 0.0
    e0 = np.exp(c * ub1 + a) * ub2
    for t, w in zip(ts, ws):
        J += w * TWO_PI / VOLUME * _ds(-phi * t * d2, base)
        et = np.exp(c * (ub1 + t * d1) + a) * (ub2 + t * d2)
        Jt += w * TWO_PI / VOLUME * _ds(phi * (e0 - et), base)
    return float(I), float(J), float(It), float(Jt)


def j_tilde_path(base: RadialPotential, c: float, path, n_path: int = 32):
    """J_tilde along a general path given as callable t -> (phi_t, phi_t', phi_t'',
    dot phi_t)."""
    a = theta_shift(c)
    e0 = np.exp(c * base.du + a) * base.d2u
    ts, ws = _gl(n_path)
    total = 0.0
    for t, w in zip(ts, ws):
        p, p1, p2, pd = path(t)
        et = np.exp(c * (base.du + p1) + a) * (base.d2u + p2)
        total += w * _ds(pd * (e0 - et), base)
    return float(TWO_PI / VOLUME * total)


# ---------------------------------------------------------------------------
# twisted K-energy and Ding functionals

def linear_path(phi, base: RadialPotential, dphi=None):
    phi, d1, d2 = _derivs(phi, base, dphi)

    def path(t):
        return t * phi, t * d1, t * d2, phi

    return path


def quadratic_path(phi, psi, base: RadialPotential):
    """phi_t = t phi + t (1 - t) psi; callable as in :func:`j_tilde_path` plus
    the derivative of dot phi (needed by the K-energy integrand)."""
    phi, d1, d2 = _derivs(phi, base)
    psi, e1, e2 = _derivs(psi, base)

    def path(t):
        g = t * (1.0 - t)
        dg = 1.0 - 2.0 * t
        return (t * phi + g * psi, t * d1 + g * e1, t * d2 + g * e2, phi + dg * psi)

    return path


def k_energy_twisted(phi, setting: Setting, n_path: int = 32, path=None, dphi=None) -> float:
    """Twisted K-energy along a path from 0 to phi (linear by default):

        mu = (2 pi / V) int_0^1 int e^{theta_t} (h_t - theta_t)' (dot phi_t)' ds dt,

    with h_t = h0 - log(u_t''/u0'') - beta phi_t (up to a constant, which
    drops out) and theta_t = c u_t' + a(c).
    """
    base = setting.base
    grid = base.grid
    beta, c = setting.beta, setting.c
    if path is None:
        phi, d1, d2 = _derivs(phi, base, dphi)
        _check_path(base, d2)
        path = linear_path(phi, base, (d1, d2))
    a = theta_shift(c)
    dh0 = setting.dh0
    ts, ws = _gl(n_path)
    total = 0.0
    for t, w in zip(ts, ws):
        p, p1, p2, pd = path(t)
        u2 = base.d2u + p2
        if np.any(u2 <= 0):
            raise PositivityError("path leaves the Kähler cone")
        lt = np.log1p(p2 / base.d2u)
        dlt = grid.d1(lt)
        dpd = grid.d1(pd)
        dh = dh0 - dlt - beta * p1 - c * u2
        total += w * _ds(np.exp(c * (base.du + p1) + a) * dh * dpd, base)
    return float(TWO_PI / VOLUME * total)


def ricci_potential_of(phi, setting: Setting, dphi=None) -> np.ndarray:
    """h_{omega_phi} for the setting's (beta, eta): h0 - log(u''/u0'') - beta phi - log N."""
    base = setting.base
    phi, d1, d2 = _derivs(phi, base, dphi)
    h = setting.h0 - np.log1p(d2 / base.d2u) - setting.beta * phi
    m = h.max()
    u = base.plus(phi, d1, d2)
    return h - m - np.log(integrate(np.exp(h - m), u) / VOLUME)


def ding_twisted(phi, setting: Setting, n_path: int = 32, dphi=None):
    """(F_tilde, F_hat)."""
    base = setting.base
    phi, d1, d2 = _derivs(phi, base, dphi)
    _, _, _, Jt = aubin_yau(phi, base, setting.c, n_path, (d1, d2))
    theta0 = setting.theta0()
    F_hat = Jt - integrate(phi * np.exp(theta0), base) / VOLUME
    g = setting.h0 - setting.beta * phi
    m = g.max()
    N = integrate(np.exp(g - m), base) / VOLUME
    F_tilde = F_hat - (m + np.log(N)) / setting.beta
    return float(F_tilde), float(F_hat)


def weighted_entropy_terms(phi, setting: Setting, dphi=None):
    """(A0, A_phi) with A0 = (1/V) int (h0 - theta) e^theta omega0 and
    A_phi = (1/V) int (h_phi - theta_phi) e^{theta_phi} omega_phi."""
    base = setting.base
    phi, d1, d2 = _derivs(phi, base, dphi)
    th0 = setting.theta0()
    A0 = integrate((setting.h0 - th0) * np.exp(th0), base) / VOLUME
    u = base.plus(phi, d1, d2)
    hphi = ricci_potential_of(phi, setting, (d1, d2))
    thp = th0 + setting.c * d1
    Ap = integrate((hphi - thp) * np.exp(thp), u) / VOLUME
    return float(A0), float(Ap)


def energy_report(phi, setting: Setting, n_path: int = 32, dphi=None,
                  log_data=None) -> EnergyReport:
    """All functionals of one potential; ``log_data=(nu, divisor)`` adds the
    log variants."""
    base = setting.base
    phi, d1, d2 = _derivs(phi, base, dphi)
    I, J, It, Jt = aubin_yau(phi, base, setting.c, n_path, (d1, d2))
    mu = k_energy_twisted(phi, setting, n_path, dphi=(d1, d2))
    Ft, Fh = ding_twisted(phi, setting, n_path, (d1, d2))
    rep = EnergyReport(I, J, It, Jt, mu, Ft, Fh)
    if log_data is not None:
        nu, D = log_data
        rep.mu_log, rep.F_log = log_functionals(phi, base, nu, D, setting.c, n_path, (d1, d2))
    return rep


# ---------------------------------------------------------------------------
# log functionals

def log_setting(base: RadialPotential, nu: float, divisor: DivisorModel, c: float) -> Setting:
    """Setting for the twist nu*lambda*omega0 with gamma = 1 - lambda nu."""
    gamma = 1.0 - divisor.lam * nu
    return Setting(base, gamma, c, TwistSpec("smooth", gamma))


def log_functionals(phi, base: RadialPotential, nu: float, divisor: DivisorModel, c: float = 0.0,
                    n_path: int = 32, dphi=None):
    """(mu_log, F_log): the log K-energy and log Ding functional of nu D."""
    if not (0.0 < nu < 1.0):
        raise ConfigError("nu outside (0,1)")
    st = log_setting(base, nu, divisor, c)
    D = divisor if divisor.log_weight is not None else divisor_weight(divisor, base, nu, st.h0)
    L = D.log_weight
    phi, d1, d2 = _derivs(phi, base, dphi)
    mu0 = k_energy_twisted(phi, st, n_path, dphi=(d1, d2))
    th0 = st.theta0()
    u = base.plus(phi, d1, d2)
    corr = nu / VOLUME * (integrate(L * np.exp(th0 + c * d1), u) - integrate(L * np.exp(th0), base))
    _, _, _, Jt = aubin_yau(phi, base, c, n_path, (d1, d2))
    F_hat = Jt - integrate(phi * np.exp(th0), base) / VOLUME
    gamma = st.beta
    g = st.h0 - gamma * phi - nu * L
    m = g.max()
    N = integrate(np.exp(g - m), base) / VOLUME
    return float(mu0 + corr), float(F_hat - (m + np.log(N)) / gamma)


def regularized_setting(base: RadialPotential, nu: float, divisor: DivisorModel, eps: float,
                        c: float) -> Setting:
    gamma = 1.0 - divisor.lam * nu
    return Setting(base, gamma, c, TwistSpec("regularized", gamma, nu=nu, lam=divisor.lam,
                                             epsilon=eps, divisor=divisor))


def properness_gap_constant(base: RadialPotential, nu: float, divisor: DivisorModel, c: float = 0.0):
    """C = -(nu/V) int log(|s|^2/(|s|^2 + 1)) e^theta omega0 (the eps = 1 value)."""
    D = divisor if divisor.log_weight is not None else divisor_weight(divisor, base, nu)
    L = D.log_weight
    th0 = c * base.du + theta_shift(c)
    f = L - np.logaddexp(L, 0.0)
    return float(-nu / VOLUME * integrate(f * np.exp(th0), base))


# ---------------------------------------------------------------------------
# inequality checks over families

def osc(f) -> float:
    return float(np.max(f) - np.min(f))


def functional_checks(family: Sequence, base: RadialPotential, c: float = 0.0, tol: float = 1e-7,
                      n_path: int = 32, twist_pair=None, base_shift=None):
    """Positivity and chain constants over a family of potentials.

    ``twist_pair=(setting1, setting2, f)`` adds the twist-change bound
    |mu_1 - mu_2| <= OSC(f); ``base_shift=psi`` adds the base-change bound
    |I_{omega_psi}(phi - psi) - I_{omega0}(phi)| <= 2 OSC(psi).
    """
    failures = []
    rows = []
    for k, phi in enumerate(family):
        phi = np.asarray(phi, float)
        I, J, It, Jt = aubin_yau(phi, base, c, n_path)
        row = dict(index=k, I=I, J=J, I_tilde=It, J_tilde=Jt)
        for name, val in (("I", I), ("J", J), ("I_tilde", It), ("J_tilde", Jt), ("I_tilde-J_tilde", It - Jt)):
            if val < -tol:
                failures.append(f"member {k}: {name} = {val:.3e} < 0")
        if base_shift is not None:
            psi = np.asarray(base_shift, float)
            basep = base.plus(psi)
            I2 = aubin_yau(phi - psi, basep, 0.0, n_path)[0]
            row["base_change_gap"] = abs(I2 - I)
            row["base_change_bound"] = 2.0 * osc(psi)
            if row["base_change_gap"] > row["base_change_bound"] + tol:
                failures.append(f"member {k}: base-change bound violated")
        if twist_pair is not None:
            s1, s2, f = twist_pair
            d = abs(k_energy_twisted(phi, s1, n_path) - k_energy_twisted(phi, s2, n_path))
            row["twist_change_gap"] = d
            row["twist_change_bound"] = osc(f)
            if d > osc(f) + tol:
                failures.append(f"member {k}: twist-change bound violated")
        rows.append(row)
    good = [r for r in rows if r["I_tilde"] > 1e-12 and r["I"] > 1e-12]
    if good:
        ratio = np.array([(r["I_tilde"] - r["J_tilde"]) / r["I_tilde"] for r in good])
        C1, C2 = float(ratio.min()), float(ratio.max())
        C3 = float(min(C1 * r["I_tilde"] / r["I"] for r in good))
        C4 = float(max(C2 * r["I_tilde"] / r["I"] for r in good))
    else:
        C1 = C2 = C3 = C4 = 0.0
    return dict(rows=rows, C1=C1, C2=C2, C3=C3, C4=C4, failures=failures)
