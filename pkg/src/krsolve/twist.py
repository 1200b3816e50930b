"""Twisting data eta: smooth, conical nu[D], or regularized nu*eta_eps.

Every twist is represented by a potential P on the grid with density P''
(so that the twist form is P''(s) ds ^ dtheta away from the poles) and by the
asymptotic slopes of P, which carry the mass of the twist including the
part that sits at a pole.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericalError
from .geometry import (DivisorModel, Grid, RadialPotential, fs_potential, divisor_weight,
                       integrate_ds, TWO_PI)

KINDS = ("none", "smooth", "conical", "regularized")


@dataclass(frozen=True, eq=False)
class TwistSpec:
    """Twist datum.

    kind: 'none', 'smooth' (eta = (1-beta)(omega0 + i ddbar f_eta)),
    'conical' (nu [D]) or 'regularized' (nu eta_eps with
    eta_eps = lambda omega0 + i ddbar log(|s|^2_H + eps^2)).
    """

    kind: str = "none"
    beta: float = 1.0
    f_eta: Optional[Union[Callable, np.ndarray]] = None
    nu: float = 0.0
    lam: float = 0.5
    epsilon: float = 1.0
    divisor: Optional[DivisorModel] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown twist kind {self.kind!r}")
        if not (0.0 < self.beta <= 1.0):
            raise ConfigError(f"beta={self.beta} outside (0, 1]")
        if self.kind in ("conical", "regularized"):
            if not (0.0 < self.nu < 1.0):
                raise ConfigError(f"nu={self.nu} outside (0, 1)")
            if self.divisor is None:
                raise ConfigError("conical twists need a divisor")
            if abs(self.divisor.lam - self.lam) > 1e-12:
                object.__setattr__(self, "lam", self.divisor.lam)
        if self.kind == "regularized" and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    # -- potentials ---------------------------------------------------------

    def f_values(self, grid: Grid) -> np.ndarray:
        if self.f_eta is None:
            return np.zeros(grid.n)
        f = self.f_eta(grid.nodes) if callable(self.f_eta) else np.asarray(self.f_eta, float)
        if f.shape != (grid.n,):
            raise ConfigError("f_eta does not match the grid")
        return f

    def log_weight(self, grid: Grid) -> np.ndarray:
        u0 = fs_potential(grid)
        D = self.divisor
        if D.log_weight is None or D.log_weight.shape != (grid.n,):
            D = divisor_weight(D, u0, self.nu)
        return D.log_weight

    def potential(self, grid: Grid) -> np.ndarray:
        """P with twist density P''."""
        u0 = fs_potential(grid)
        if self.kind == "none":
            return np.zeros(grid.n)
        if self.kind == "smooth":
            return (1.0 - self.beta) * (u0.u + self.f_values(grid))
        L = self.log_weight(grid)
        if self.kind == "conical":
            return self.nu * (self.lam * u0.u + L)
        return self.nu * (self.lam * u0.u + np.logaddexp(L, 2.0 * np.log(self.epsilon)))

    def slopes(self):
        """Asymptotic slopes (P'(-inf), P'(+inf))."""
        if self.kind == "none":
            return 0.0, 0.0
        if self.kind == "smooth":
            return 0.0, 2.0 * (1.0 - self.beta)
        k0, ki = self.divisor.slopes()
        if self.kind == "conical":
            return self.nu * k0, self.nu * (2.0 * self.lam + ki)
        # log(|s|^2 + eps^2) flattens wherever |s|^2 -> 0
        left = 0.0 if self.divisor.has_zero else self.nu * k0
        right = self.nu * 2.0 * self.lam + (0.0 if self.divisor.has_inf else self.nu * ki)
        return left, right

    def mass(self) -> float:
        """Total mass of the twist in int ds units (class of eta)."""
        a, b = self.slopes()
        if self.kind == "conical":
            return 2.0 * self.nu * self.lam
        return b - a

    def density(self, grid: Grid) -> np.ndarray:
        """Twist density against ds ^ dtheta, evaluated analytically."""
        u0 = fs_potential(grid)
        if self.kind == "none":
            return np.zeros(grid.n)
        if self.kind == "smooth":
            f2 = grid.d2(self.f_values(grid)) if self.f_eta is not None else 0.0
            return (1.0 - self.beta) * (u0.d2u + f2)
        if self.kind == "conical":
            return np.zeros(grid.n)
        return self.nu * regularized_density(self.epsilon, self.lam, self.divisor, u0,
                                             self.log_weight(grid))

    def delta_mass(self) -> float:
        """Mass 2 pi nu (per cone point) concentrated at the poles (conical only)."""
        if self.kind != "conical":
            return 0.0
        return TWO_PI * self.nu * len(self.divisor.points)

    def check(self, grid: Grid, tol: float = 1e-10) -> "TwistSpec":
        d = self.density(grid)
        if d.min() < -tol:
            raise ConfigError(f"twist is not semipositive: density {d.min():.3e} < 0")
        if self.kind == "smooth" and self.f_eta is not None:
            f = self.f_values(grid)
            if abs(f.max()) > 1e-10:
                raise ConfigError("f_eta must satisfy sup f_eta = 0")
        return self


def smooth_twist(beta: float, f_eta=None) -> TwistSpec:
    return TwistSpec("smooth", beta, f_eta)


def regularized_density(epsilon, lam, divisor: DivisorModel, u0: RadialPotential,
                        log_weight=None) -> np.ndarray:
    """Density of eta_eps = lam omega0 + i ddbar log(|s|^2_H + eps^2):

        lam u0'' eps^2/(w + eps^2) + eps^2 w L'^2/(w + eps^2)^2,

    with w = |s|^2_H, L = log w and L' = [0 in D] - lam u0'.  Both terms are
    nonnegative.
    """
    if log_weight is None:
        log_weight = divisor_weight(divisor, u0, 0.5).log_weight
    k0 = 1.0 if divisor.has_zero else 0.0
    dL = k0 - lam * u0.du
    e2 = epsilon * epsilon
    # eps^2/(w + eps^2) and w/(w + eps^2) computed in log form
    lse = np.logaddexp(log_weight, np.log(e2))
    a = np.exp(np.log(e2) - lse)
    b = np.exp(log_weight - lse)
    return lam * u0.d2u * a + a * b * dL * dL


def regularized_potential_slope(epsilon, lam, divisor: DivisorModel, u0: RadialPotential,
                                log_weight) -> np.ndarray:
    """P' for P = lam u0 + log(|s|^2_H + eps^2)."""
    k0 = 1.0 if divisor.has_zero else 0.0
    dL = k0 - lam * u0.du
    frac = np.exp(log_weight - np.logaddexp(log_weight, 2.0 * np.log(epsilon)))
    return lam * u0.du + frac * dL


def regularized_twist(epsilon, nu, lam, divisor: DivisorModel, u0: RadialPotential):
    """Density of eta_eps and its total mass 2 pi int density ds.

    The mass is the on-grid quadrature plus the exact off-grid masses
    P'(s_0) - P'(-inf) and P'(+inf) - P'(s_N); for small eps most of the
    mass sits beyond the truncation, next to the divisor.
    Returns (density, mass, on_grid_mass).
    """
    if not (0.0 < nu < 1.0):
        raise ConfigError("nu outside (0,1)")
    D = divisor if divisor.log_weight is not None else divisor_weight(divisor, u0, nu)
    dens = regularized_density(epsilon, lam, D, u0, D.log_weight)
    if dens.min() < -1e-10:
        raise NumericalError("regularized twist density is negative")
    grid = u0.grid
    on_grid = TWO_PI * integrate_ds(dens, grid, tails=False)
    dP = regularized_potential_slope(epsilon, lam, D, u0, D.log_weight)
    tw = TwistSpec("regularized", 1.0 - lam * nu, nu=nu, lam=lam, epsilon=epsilon, divisor=D)
    left, right = tw.slopes()
    # slopes() carries the factor nu; undo it here
    left, right = left / nu, right / nu
    mass = on_grid + TWO_PI * ((dP[0] - left) + (right - dP[-1]))
    return dens, mass, on_grid


def chi_smoothing(epsilon, nu, t, backend=None):
    """chi(eps^2 + t) = 1/(1-nu) int_0^t ((eps^2+r)^{1-nu} - eps^{2-2nu})/r dr."""
    if not (0.0 < nu < 1.0):
        raise ConfigError("nu outside (0,1)")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("chi needs t >= 0")
    return _kernels.chi_quadrature(t.ravel(), epsilon * epsilon, nu, backend).reshape(t.shape)


def chi_derivatives(epsilon, nu, t):
    """chi'(t), chi''(t) in the t variable (closed form)."""
    t = np.asarray(t, dtype=float)
    e2 = epsilon * epsilon
    a = 1.0 - nu
    base = e2 ** a
    ts = np.maximum(t, 1e-300)
    num = (e2 + ts) ** a - base
    small = t < 1e-8 * e2
    d1 = np.where(small, e2 ** (-nu) * (1.0 - nu * t / (2 * e2)), num / (a * ts))
    # chi'' = [(1-nu) t (e2+t)^{-nu} - num] / ((1-nu) t^2)
    d2 = np.where(small, -0.5 * nu * e2 ** (-nu - 1.0),
                  (a * ts * (e2 + ts) ** (-nu) - num) / (a * ts * ts))
    return d1, d2


def smoothing_reference(epsilon, nu, k, divisor: DivisorModel, u0: RadialPotential):
    """Density of omega_eps by the chain rule with w = |s|^2_H:
    u0'' + k (chi'' w'^2 + chi' w'')."""
    D = divisor if divisor.log_weight is not None else divisor_weight(divisor, u0, nu)
    L = D.log_weight
    w = np.exp(L)
    k0 = 1.0 if D.has_zero else 0.0
    dL = k0 - D.lam * u0.du
    d2L = -D.lam * u0.d2u
    w1 = w * dL
    w2 = w * (d2L + dL * dL)
    c1, c2 = chi_derivatives(epsilon, nu, w)
    chi = chi_smoothing(epsilon, nu, w)
    dens = u0.d2u + k * (c2 * w1 * w1 + c1 * w2)
    return chi, k * c1 * w1, dens


def select_k(epsilons, nu, divisor: DivisorModel, u0: RadialPotential, ratio: float = 0.1):
    """Largest k in {2^-1, ..., 2^-10} with omega_eps >= ratio * omega0 for
    every scheduled eps; returns (k, min density ratio)."""
    for j in range(1, 11):
        k = 2.0 ** (-j)
        worst = np.inf
        for eps in epsilons:
            _, _, dens = smoothing_reference(eps, nu, k, divisor, u0)
            worst = min(worst, float(np.min(dens / u0.d2u)))
        if worst >= ratio:
            return k, worst
    raise NumericalError("no admissible smoothing coefficient k")
