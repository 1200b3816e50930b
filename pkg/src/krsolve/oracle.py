"""Closed-form football/teardrop solitons in the moment coordinate.

With tau = u'(s) in [0, 2] and v(tau) = u''(s), the radial soliton equation
Ric = beta omega + L_X omega becomes the linear ODE

    v'' + c v' + beta = 0,   v(0) = v(2) = 0,   v'(0) = alpha0,

and alpha_inf = -v'(2).  Solutions are written with the entire functions
e1(x) = (1 - e^-x)/x and q(x) = (x - 1 + e^-x)/x^2 so that c -> 0 is smooth:

    v(tau) = alpha0 tau e1(c tau) - beta tau^2 q(c tau).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import ConfigError, NumericalError
from .geometry import Grid, RadialPotential, TWO_PI


def _e1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    big = -np.expm1(-xs) / xs
    ser = 1.0 - x / 2.0 + x * x / 6.0 - x ** 3 / 24.0
    return np.where(small, ser, big)


def _q(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = (xs + np.expm1(-xs)) / (xs * xs)
    ser = 0.5 - x / 6.0 + x * x / 24.0 - x ** 3 / 120.0 + x ** 4 / 720.0
    return np.where(small, ser, big)


def _p(x):
    """(1 - (1 + x) e^-x)/x^2 = e1(x) - q(x)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = -(np.expm1(-xs) + xs * np.exp(-xs)) / (xs * xs)
    ser = 0.5 - x / 3.0 + x * x / 8.0 - x ** 3 / 30.0 + x ** 4 / 144.0
    return np.where(small, ser, big)


def closure_ratio(c: float) -> float:
    """alpha0 / beta for the two-point problem at coefficient c (= 1 at c=0)."""
    return float(2.0 * _q(2.0 * c) / _e1(2.0 * c))


@dataclass(frozen=True)
class FootballSoliton:
    """Closed-form soliton.  For c != 0, v = A + B e^{-c tau} - (beta/c) tau;
    for |c| < 1e-8, v = A tau + B tau^2 (A = alpha0, B = -beta/2) to leading
    order.  A and B are descriptive; v() always uses the e1/q form."""

    c: float
    alpha0: float
    alpha_inf: float
    beta: float
    A: float
    B: float

    def v(self, tau, delta=None):
        """Moment profile; near tau = 2 it is evaluated from delta = 2 - tau
        (pass ``delta`` explicitly when it is known more accurately)."""
        tau = np.asarray(tau, dtype=float)
        if delta is None:
            delta = 2.0 - tau
        left = self.alpha0 * tau * _e1(self.c * tau) - self.beta * tau * tau * _q(self.c * tau)
        right = (self.alpha_inf * delta * _e1(-self.c * delta)
                 - self.beta * delta * delta * _q(-self.c * delta))
        return np.where(tau <= 1.0, left, right)

    def dv(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.alpha0 * np.exp(-self.c * tau) - self.beta * tau * _e1(self.c * tau)

    def to_json(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def solve_football(c: float, alpha0: float) -> FootballSoliton:
    """Close v'' + c v' + beta = 0 with v(0)=0, v'(0)=alpha0, v(2)=0."""
    if not (0.0 < alpha0 <= 1.0):
        raise ConfigError(f"alpha0={alpha0} outside (0, 1]")
    if not np.isfinite(c):
        raise ConfigError("c must be finite")
    x = 2.0 * c
    e1 = float(_e1(x))
    beta = alpha0 * e1 / (2.0 * float(_q(x)))
    # -v'(2) written without cancellation
    alpha_inf = alpha0 * float(_p(x)) / float(_q(x))
    if abs(c) < 1e-8:
        A, B = alpha0, -0.5 * beta
    else:
        A = alpha0 / c + beta / (c * c)
        B = -A
    sol = FootballSoliton(float(c), float(alpha0), float(alpha_inf), float(beta), float(A), float(B))
    tau = np.linspace(0.0, 2.0, 2001)[1:-1]
    if np.any(sol.v(tau) <= 0) or alpha_inf <= 0:
        raise ConfigError(f"nonadmissible soliton parameters (c={c}, alpha0={alpha0})")
    return sol


def smooth_closure_mismatch(c: float) -> float:
    """alpha_inf - 1 for alpha0 = 1; vanishes only at c = 0."""
    return solve_football(c, 1.0).alpha_inf - 1.0


def soliton_coefficient(nu: float, bracket=(-10.0, 10.0), xtol=1e-13):
    """Coefficient c(nu) of the teardrop with a cone of slope 1-nu at s=-inf
    and a smooth pole at +inf.  Returns (c, soliton, bracket)."""
    if not (0.0 < nu < 1.0):
        raise ConfigError(f"nu={nu} outside (0,1)")
    target = (1.0 - nu) / (1.0 - 0.5 * nu)
    f = lambda c: closure_ratio(c) - target
    lo, hi = bracket
    # for nu close to 1 the root leaves [-10, 10] (c ~ -1/target); widen
    while f(lo) * f(hi) > 0 and max(-lo, hi) < 1e4:
        lo, hi = 2.0 * lo, 2.0 * hi
    if f(lo) * f(hi) > 0:
        raise NumericalError("no soliton coefficient in bracket")
    c = brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    sol = solve_football(c, 1.0 - nu)
    return float(c), sol, (float(c - xtol), float(c + xtol))


# ---------------------------------------------------------------------------
# moment coordinate -> log-radial coordinate

class _SCoordinate:
    """s(tau) = int_1^tau dsigma / v with the endpoint poles split off:
    1/v = 1/(alpha0 tau) + 1/(alpha_inf (2 - tau)) + r(tau), r smooth."""

    def __init__(self, sol: FootballSoliton, deg: int = 160):
        self.sol = sol
        a0, ai = sol.alpha0, sol.alpha_inf

        def r(t):
            return 1.0 / sol.v(t) - 1.0 / (a0 * t) - 1.0 / (ai * (2.0 - t))

        # Chebyshev interpolants on [0, 2] never touch the endpoints
        self.r = C.Chebyshev.interpolate(r, deg, domain=[0.0, 2.0])
        self.R = self.r.integ(lbnd=1.0)
        self.tr = C.Chebyshev.interpolate(lambda t: t * r(t), deg, domain=[0.0, 2.0])
        self.TR = self.tr.integ(lbnd=1.0)

    def s_of_tau(self, tau):
        a0, ai = self.sol.alpha0, self.sol.alpha_inf
        return np.log(tau) / a0 - np.log((2.0 - tau)) / ai + self.R(tau)

    def _s_of_y(self, y):
        # tau = 2/(1+e^-y): log tau and log(2-tau) without cancellation
        a0, ai = self.sol.alpha0, self.sol.alpha_inf
        lt = np.log(2.0) - np.logaddexp(0.0, -y)
        l2 = np.log(2.0) - np.logaddexp(0.0, y)
        tau = 2.0 / (1.0 + np.exp(-y))
        delta = 2.0 / (1.0 + np.exp(y))
        return lt / a0 - l2 / ai + self.R(tau), tau, delta

    def u_of_tau(self, tau, delta=None):
        a0, ai = self.sol.alpha0, self.sol.alpha_inf
        if delta is None:
            delta = 2.0 - tau
        return tau / a0 - (tau + 2.0 * np.log(delta)) / ai + self.TR(tau)

    def tau_of_s(self, s, shift: float = 0.0):
        """Invert s(tau) = s_node - shift by Newton in y = log(tau/(2-tau))."""
        target = np.asarray(s, dtype=float) - shift
        a0, ai = self.sol.alpha0, self.sol.alpha_inf
        # asymptotic initial guess
        y = np.where(target < 0, a0 * target, ai * target)
        for _ in range(100):
            sv, tau, delta = self._s_of_y(y)
            F = sv - target
            # ds/dy = tau (2 - tau) / (2 v)
            dF = 0.5 * tau * delta / self.sol.v(tau, delta)
            step = np.clip(F / dF, -2.0, 2.0)
            y = y - step
            if np.max(np.abs(step) / np.maximum(1.0, np.abs(y))) < 1e-14:
                break
        else:
            raise NumericalError("moment-coordinate inversion failed")
        return 2.0 / (1.0 + np.exp(-y)), 2.0 / (1.0 + np.exp(y))


def to_radial(sol: FootballSoliton, grid: Grid, shift: float = 0.0) -> RadialPotential:
    """Reconstruct u(s) with u' = tau(s) and u'' = v(tau(s)).

    The translation is fixed by tau(shift) = 1; the constant of u by
    u = 2 log 2 at that point (both as for the Fubini-Study potential).
    """
    sc = _SCoordinate(sol)
    tau, delta = sc.tau_of_s(grid.nodes, shift)
    u = sc.u_of_tau(tau, delta) - float(sc.u_of_tau(1.0)) + 2.0 * np.log(2.0)
    return RadialPotential(grid, u, tau, sol.v(tau, delta), sol.alpha0, sol.alpha_inf)


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    # numpy's leggauss is slow for thousands of nodes
    return roots_legendre(n)


def reference_quadrature(f, sol: FootballSoliton, resolution: int = 8192) -> float:
    """int_M f omega = 2 pi int_0^2 f(tau) dtau for a function of the moment
    coordinate, by Gauss-Legendre with ``resolution`` nodes."""
    if resolution < 16:
        raise ConfigError("resolution too small")
    x, w = _gauss_legendre(resolution)
    tau = 1.0 + x
    return float(TWO_PI * w @ np.asarray(f(tau), dtype=float))


def reference_quadrature_s(f, sol: FootballSoliton, s_max: float = 40.0,
                           resolution: int = 32768) -> float:
    """The same integral computed in the log-radial coordinate on a long
    fine grid (independent route): 2 pi int f(tau(s)) v(tau(s)) ds."""
    s = np.linspace(-s_max, s_max, resolution)
    sc = _SCoordinate(sol)
    tau, delta = sc.tau_of_s(s)
    g = np.asarray(f(tau), dtype=float) * sol.v(tau, delta)
    return float(TWO_PI * trapezoid(g, s))


def oracle_diameter(sol: FootballSoliton, resolution: int = 256) -> float:
    """Pole-to-pole meridian length int_0^2 dtau / sqrt(2 v(tau)).

    With tau = 1 - cos x the endpoint singularities cancel against
    dtau = sin x dx and Gauss-Legendre in x converges quickly.
    """
    x, w = np.polynomial.legendre.leggauss(resolution)
    x = 0.5 * np.pi * (x + 1.0)
    w = 0.5 * np.pi * w
    tau = 1.0 - np.cos(x)
    delta = 1.0 + np.cos(x)
    return float(w @ (np.sin(x) / np.sqrt(2.0 * sol.v(tau, delta))))
