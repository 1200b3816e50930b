"""S^1-invariant Kähler metrics on the Riemann sphere as radial potentials.

Coordinates: s = log|z|^2 on a truncated interval [-s_max, s_max].  A metric
is ``omega = u''(s) ds ^ dtheta`` so that ``int_M f omega = 2 pi int f u'' ds``
and the total area of the class is ``V = 4 pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConfigError, NumericalError, PositivityError, CohomologyError

VOLUME = 4.0 * np.pi
TWO_PI = 2.0 * np.pi


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights at ``z`` for derivatives 0..m on nodes ``x``
    (Fornberg's recursion).  Returns an array of shape (m+1, len(x))."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c.T


_C1 = fd_weights(0.0, np.arange(-2.0, 3.0), 2)[1]
_C2 = fd_weights(0.0, np.arange(-2.0, 3.0), 2)[2]
_B1 = np.array([fd_weights(float(i), np.arange(6.0), 2)[1] for i in range(2)])
_B2 = np.array([fd_weights(float(i), np.arange(6.0), 2)[2] for i in range(2)])


@dataclass(frozen=True, eq=False)
class Grid:
    """Symmetric grid on [-s_max, s_max], optionally clustered toward s = 0.

    The map from the uniform computational variable xi in [-1, 1] is
    ``s = s_max * sinh(b xi) / sinh(b)`` with ``b = stretch`` (identity for 0).
    """

    nodes: np.ndarray
    weights: np.ndarray
    s_max: float
    stretch: float
    h_xi: float
    ds_dxi: np.ndarray
    d2s_dxi2: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def derivatives(self, f, backend=None):
        """Return (f', f'') in s using the 4th-order stencils."""
        f1, f2 = _kernels.stencil_derivatives(f, _C1, _C2, _B1, _B2, self.h_xi, backend)
        d1 = f1 / self.ds_dxi
        d2 = (f2 - self.d2s_dxi2 * d1) / self.ds_dxi ** 2
        return d1, d2

    def d1(self, f):
        return self.derivatives(f)[0]

    def d2(self, f):
        return self.derivatives(f)[1]

    @cached_property
    def matrices(self):
        """Sparse (D1, D2) in s, CSR."""
        n = self.n
        rows, cols, v1, v2 = [], [], [], []
        for i in range(n):
            if 2 <= i <= n - 3:
                idx = np.arange(i - 2, i + 3)
                w1, w2 = _C1, _C2
            elif i < 2:
                idx = np.arange(6)
                w1, w2 = _B1[i], _B2[i]
            else:
                j = n - 1 - i
                idx = n - 1 - np.arange(6)
                w1, w2 = -_B1[j], _B2[j]
            rows.extend([i] * len(idx))
            cols.extend(idx)
            v1.extend(w1 / self.h_xi)
            v2.extend(w2 / self.h_xi ** 2)
        d1x = sp.csr_matrix((v1, (rows, cols)), shape=(n, n))
        d2x = sp.csr_matrix((v2, (rows, cols)), shape=(n, n))
        inv = sp.diags(1.0 / self.ds_dxi)
        d1s = (inv @ d1x).tocsr()
        d2s = (sp.diags(1.0 / self.ds_dxi ** 2) @ (d2x - sp.diags(self.d2s_dxi2) @ d1s)).tocsr()
        return d1s, d2s


def build_grid(n_points: int, s_max: float, stretch: float = 0.0) -> Grid:
    """Symmetric grid with trapezoid weights (see :class:`Grid`)."""
    if n_points < 64:
        raise ConfigError(f"n_points={n_points} < 64")
    if s_max < 8:
        raise ConfigError(f"s_max={s_max} < 8 would truncate the asymptotic regime")
    if stretch < 0:
        raise ConfigError("stretch must be nonnegative")
    xi = np.linspace(-1.0, 1.0, n_points)
    h = 2.0 / (n_points - 1)
    if stretch == 0.0:
        s = s_max * xi
        s_xi = np.full(n_points, float(s_max))
        s_xixi = np.zeros(n_points)
    else:
        b = float(stretch)
        sb = np.sinh(b)
        s = s_max * np.sinh(b * xi) / sb
        s_xi = s_max * b * np.cosh(b * xi) / sb
        s_xixi = s_max * b * b * np.sinh(b * xi) / sb
    # exact symmetry
    s = 0.5 * (s - s[::-1])
    w = np.empty(n_points)
    w[1:-1] = 0.5 * (s[2:] - s[:-2])
    w[0] = 0.5 * (s[1] - s[0])
    w[-1] = 0.5 * (s[-1] - s[-2])
    return Grid(s, w, float(s_max), float(stretch), h, s_xi, s_xixi)


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Profile u(s) with derivatives; ``alpha0``/``alpha_inf`` are the model
    cone slopes of log u'' at the two poles (1 for a smooth pole)."""

    grid: Grid
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    alpha0: float = 1.0
    alpha_inf: float = 1.0

    def check(self, floor: float = 0.0) -> "RadialPotential":
        if not np.all(np.isfinite(self.d2u)):
            raise NumericalError("non-finite metric density")
        bad = np.flatnonzero(self.d2u <= floor)
        if bad.size:
            raise PositivityError(f"u'' <= {floor} at {bad.size} nodes (first s={self.grid.nodes[bad[0]]:.3f})")
        return self

    def plus(self, phi, dphi=None, d2phi=None, **kw) -> "RadialPotential":
        """The potential u + phi (derivatives of phi by finite differences
        unless supplied)."""
        if dphi is None or d2phi is None:
            dphi, d2phi = self.grid.derivatives(phi)
        kw.setdefault("alpha0", self.alpha0)
        kw.setdefault("alpha_inf", self.alpha_inf)
        return RadialPotential(self.grid, self.u + phi, self.du + dphi, self.d2u + d2phi, **kw)

    @property
    def tail_slopes(self):
        """Local exponential rates of u'' at the two truncation ends."""
        lg = np.log(self.d2u)
        d = self.grid.d1(lg)
        return float(d[0]), float(-d[-1])

    def moment_profile(self):
        """(tau, v) with tau = u' and v = u''."""
        return self.du.copy(), self.d2u.copy()

    def to_csv(self, path) -> None:
        data = np.column_stack([self.grid.nodes, self.u, self.du, self.d2u])
        np.savetxt(path, data, delimiter=",", header="s,u,du,d2u", comments="", fmt="%.17g")


def potential_from_u(grid: Grid, u, alpha0=1.0, alpha_inf=1.0) -> RadialPotential:
    d1, d2 = grid.derivatives(u)
    return RadialPotential(grid, np.asarray(u, float), d1, d2, alpha0, alpha_inf)


def load_potential_csv(path, s_max=None, stretch=0.0) -> RadialPotential:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    s = data[:, 0]
    grid = build_grid(len(s), s_max if s_max is not None else float(s[-1]), stretch)
    if not np.allclose(grid.nodes, s, rtol=0, atol=1e-9):
        raise ConfigError("potential file nodes do not match a symmetric grid")
    return RadialPotential(grid, data[:, 1], data[:, 2], data[:, 3])


def fs_potential(grid: Grid) -> RadialPotential:
    """Fubini-Study potential u0 = 2 log(1 + e^s)."""
    s = grid.nodes
    u = 2.0 * np.logaddexp(0.0, s)
    du = 2.0 / (1.0 + np.exp(-s))
    d2u = 0.5 / np.cosh(0.5 * s) ** 2
    return RadialPotential(grid, u, du, d2u)


def fs_moment_profile(tau):
    return tau - 0.5 * tau * tau


# ---------------------------------------------------------------------------
# quadrature

def _tail(g, grid: Grid, end: int, fallback: float) -> float:
    """Integral of g beyond the truncation end assuming exponential decay."""
    if end == 0:
        seg = g[:6]
        sgn = 1.0
    else:
        seg = g[-6:][::-1]
        sgn = -1.0
    if seg[0] == 0.0:
        return 0.0
    rate = fallback
    if np.all(seg != 0) and np.all(np.sign(seg) == np.sign(seg[0])):
        x = grid.nodes[:6] if end == 0 else grid.nodes[-6:][::-1]
        w = fd_weights(x[0], x, 1)[1]
        r = sgn * float(w @ np.log(np.abs(seg)))
        if r > 0.05:
            rate = r
    return float(seg[0] / max(rate, 1e-3))


def _end_correction(g, grid: Grid) -> float:
    """Euler-Maclaurin h^2/12 endpoint term of the trapezoid rule."""
    s = grid.nodes
    wl = fd_weights(s[0], s[:6], 1)[1]
    wr = fd_weights(s[-1], s[-6:], 1)[1]
    hl = s[1] - s[0]
    hr = s[-1] - s[-2]
    return (hl * hl * float(wl @ g[:6]) - hr * hr * float(wr @ g[-6:])) / 12.0


def integrate_ds(g, grid: Grid, tails: bool = True, rates=(1.0, 1.0)) -> float:
    """int g ds over the line: corrected trapezoid plus exponential tails."""
    g = np.asarray(g, dtype=float)
    total = float(grid.weights @ g) + _end_correction(g, grid)
    if tails:
        total += _tail(g, grid, 0, rates[0]) + _tail(g, grid, -1, rates[1])
    return total


def _log_rate(f, grid: Grid, end: int) -> float:
    seg = f[:6] if end == 0 else f[-6:][::-1]
    if not (np.all(seg != 0) and np.all(np.sign(seg) == np.sign(seg[0]))):
        return 0.0
    x = grid.nodes[:6] if end == 0 else grid.nodes[-6:][::-1]
    r = float(fd_weights(x[0], x, 1)[1] @ np.log(np.abs(seg)))
    return r if end == 0 else -r


def integrate(f, u: RadialPotential, tails: bool = True) -> float:
    """int_M f omega_u = 2 pi int f u'' ds.

    Beyond the truncation the mass of u'' is known exactly (u' -> 0 and 2);
    it is redistributed against f using the local exponential rates of f and
    u'' at each end.
    """
    f = np.broadcast_to(np.asarray(f, dtype=float), u.d2u.shape)
    if not np.all(np.isfinite(f)):
        raise NumericalError("non-finite integrand")
    g = f * u.d2u
    total = float(u.grid.weights @ g) + _end_correction(g, u.grid)
    if tails:
        a0, ai = u.tail_slopes
        k0 = _log_rate(f, u.grid, 0)
        ki = _log_rate(f, u.grid, -1)
        m0 = u.du[0]
        mi = 2.0 - u.du[-1]
        total += f[0] * m0 * a0 / max(a0 + k0, 1e-3 * a0)
        total += f[-1] * mi * ai / max(ai + ki, 1e-3 * ai)
    return TWO_PI * total


# ---------------------------------------------------------------------------
# vector field potential

@dataclass(frozen=True)
class VectorFieldSpec:
    """X = c z d/dz."""

    c: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise ConfigError("vector field coefficient must be finite")


def theta_shift(c: float) -> float:
    """Normalizing constant a(c) with int e^{c u' + a} omega_u = V for any
    admissible u (the weighted integral only depends on the limits of u')."""
    if abs(c) < 1e-8:
        return -c - c * c / 6.0
    return float(np.log(2.0 * c / np.expm1(2.0 * c)))


def theta_shift_derivative(c: float) -> float:
    if abs(c) < 1e-5:
        return -1.0 - c / 3.0
    return float(1.0 / c - 2.0 / (-np.expm1(-2.0 * c)))


def theta_potential(u: RadialPotential, X, exact: bool = False):
    """theta_X(omega_u) = c u' + shift, normalized by (1/V) int e^theta omega_u = 1.

    With ``exact`` the closed-form shift is used; otherwise the shift is
    recomputed from the quadrature of this metric.
    """
    c = X.c if isinstance(X, VectorFieldSpec) else float(X)
    if c == 0.0:
        return np.zeros_like(u.du), 0.0
    base = c * u.du
    if exact:
        a = theta_shift(c)
    else:
        m = base.max()
        val = integrate(np.exp(base - m), u)
        if not np.isfinite(val) or val <= 0:
            raise NumericalError("theta normalization integral failed")
        a = -(m + np.log(val / VOLUME))
    return base + a, float(a)


# ---------------------------------------------------------------------------
# curvature

def ricci_density(u: RadialPotential) -> np.ndarray:
    """-(log u'')'' : coefficient of Ric(omega_u)."""
    if np.any(u.d2u <= 0):
        raise PositivityError("u'' must be positive")
    return -u.grid.d2(np.log(u.d2u))


def ricci_potential(u: RadialPotential, beta: float, twist=None, X=None,
                    tol: float = 1e-6) -> np.ndarray:
    """Solve h'' = ric - beta u'' - twist density in closed form.

    The twist contributes through its potential P (twist density = P'');
    then h = -log u'' - beta u - P + a s + b with the slope a fixed by the
    pole at s -> -inf and b by int e^h omega = V.
    """
    if np.any(u.d2u <= 0):
        raise PositivityError("u'' must be positive")
    s = u.grid.nodes
    if twist is None:
        P = np.zeros_like(s)
        p_left, p_right = 0.0, 0.0
    else:
        P = twist.potential(u.grid)
        p_left, p_right = twist.slopes()
    mismatch = u.alpha0 + u.alpha_inf - 2.0 * beta - (p_right - p_left)
    if abs(mismatch) > tol:
        raise CohomologyError(f"total curvature mismatch {mismatch:.3e}: inconsistent beta/twist/cone data")
    a = u.alpha0 + p_left
    h = -np.log(u.d2u) - beta * u.u - P + a * s
    h -= h.max()
    b = -np.log(integrate(np.exp(h), u) / VOLUME)
    return h + b


# ---------------------------------------------------------------------------
# divisors

@dataclass(frozen=True, eq=False)
class DivisorModel:
    """S^1-invariant divisor supported on {0}, {inf} or {0, inf}.

    ``log_weight`` holds log|s|^2_H on the grid (normalization applied).
    """

    points: tuple
    lam: float
    log_weight: Optional[np.ndarray] = None
    norm_const: float = 0.0

    def __post_init__(self):
        pts = tuple(sorted(set(self.points), key=str))
        if not pts or any(p not in ("0", "inf") for p in pts):
            raise ConfigError(f"divisor points must be a nonempty subset of {{0, inf}}, got {self.points}")
        object.__setattr__(self, "points", pts)
        if not (0.0 < self.lam <= 1.0):
            raise ConfigError("lambda must lie in (0, 1]")

    @property
    def has_zero(self) -> bool:
        return "0" in self.points

    @property
    def has_inf(self) -> bool:
        return "inf" in self.points

    def raw_log_weight(self, s, u0):
        """log|s|^2_H before normalization: [0 in D] s - lambda u0."""
        return (s if self.has_zero else 0.0) - self.lam * u0

    def slopes(self):
        """Asymptotic slopes of log|s|^2_H at s -> -inf and +inf."""
        k0 = 1.0 if self.has_zero else 0.0
        return k0, k0 - 2.0 * self.lam

    def cone_slopes(self, nu):
        """Cone parameters of the conical limit at the two poles."""
        a0 = 1.0 - nu if self.has_zero else 1.0
        ai = 1.0 - nu if self.has_inf else 1.0
        return a0, ai


def make_divisor(points: Sequence[str]) -> DivisorModel:
    pts = tuple(str(p) for p in points)
    return DivisorModel(pts, len(set(pts)) / 2.0)


def divisor_weight(D: DivisorModel, u0: RadialPotential, nu: float, h0=None) -> DivisorModel:
    """Fill log|s|^2_H with (1/V) int e^{h0} |s|_H^{-2 nu} omega_0 = 1."""
    if not (0.0 < nu < 1.0):
        raise ConfigError(f"nu={nu} outside (0,1): weight integral diverges")
    s = u0.grid.nodes
    L0 = D.raw_log_weight(s, u0.u)
    h0 = np.zeros_like(s) if h0 is None else np.asarray(h0, float)
    g = h0 - nu * L0
    m = g.max()
    val = integrate(np.exp(g - m), u0)
    if not np.isfinite(val) or val <= 0:
        raise NumericalError("divisor normalization integral failed")
    const = (m + np.log(val / VOLUME)) / nu
    return DivisorModel(D.points, D.lam, L0 + const, float(const))


def divisor_norm_const_exact(D: DivisorModel, nu: float) -> float:
    """Closed-form normalization constant for the FS reference metric.

    D={0} or {inf}, lambda=1/2: |s|^2 = K e^s/(1+e^s) with K^nu = 1/(1-nu).
    D={0,inf}, lambda=1: |s|^2 = K e^s/(1+e^s)^2 with K^nu = B(1-nu, 1-nu).
    """
    from scipy.special import beta as beta_fn
    if len(D.points) == 1:
        return float(-np.log(1.0 - nu) / nu)
    return float(np.log(beta_fn(1.0 - nu, 1.0 - nu)) / nu)


# ---------------------------------------------------------------------------
# meridian geometry

@dataclass(frozen=True, eq=False)
class Meridian:
    """Arclength data along a meridian: dl = sqrt(u''/2) ds."""

    s: np.ndarray
    arclength: np.ndarray      # distance from the pole at s = -inf
    diameter: float
    tails: tuple

    def distance(self, s1, s2):
        a = np.interp(s1, self.s, self.arclength)
        b = np.interp(s2, self.s, self.arclength)
        return np.abs(b - a)


def _tail_length(tau0, v0, rate):
    """int_0^tau0 dtau / sqrt(2 v) for v = a tau + b tau^2 matched to
    v(tau0) = v0 and v'(tau0) = rate (the local slope of log u'')."""
    b = (rate * tau0 - v0) / tau0 ** 2
    a = (2.0 * v0 - rate * tau0) / tau0
    if a <= 0:
        # no cone-type behaviour left to match: pure exponential tail
        return 2.0 * np.sqrt(0.5 * v0) / max(rate, 1e-3)
    x = b * tau0 / a
    base = np.sqrt(2.0 * tau0 / a)
    if abs(x) < 1e-8:
        return float(base * (1.0 - x / 6.0))
    if x > 0:
        return float(base * np.arcsinh(np.sqrt(x)) / np.sqrt(x))
    if x <= -1:
        return float(base * (np.pi / 2) / np.sqrt(-x))
    return float(base * np.arcsin(np.sqrt(-x)) / np.sqrt(-x))


def meridian_metrics(u: RadialPotential, tail_tol: float = 0.02) -> Meridian:
    """Meridian arclength and the pole-to-pole diameter.

    Cumulative arclength uses the trapezoid rule on a cubic refinement of
    sqrt(u''/2).  Beyond the truncation the profile is continued in the
    moment coordinate as v = a tau + b tau^2, matched to u', u'' and the
    slope of log u'' at the end node, and the length int dtau/sqrt(2v) is
    taken in closed form.
    """
    g = np.sqrt(0.5 * u.d2u)
    s = u.grid.nodes
    dg = u.grid.d1(g)
    ds = np.diff(s)
    # Hermite-corrected trapezoid: exact for cubics on each cell
    seg = 0.5 * ds * (g[:-1] + g[1:]) + ds ** 2 / 12.0 * (dg[:-1] - dg[1:])
    a0, ai = u.tail_slopes
    t0 = _tail_length(u.du[0], u.d2u[0], a0)
    t1 = _tail_length(2.0 - u.du[-1], u.d2u[-1], ai)
    arc = t0 + np.concatenate([[0.0], np.cumsum(seg)])
    diam = float(arc[-1] + t1)
    if max(t0, t1) > tail_tol * diam:
        raise NumericalError(f"meridian tail {max(t0, t1):.3e} exceeds {tail_tol:.0%} of diameter: grid too small")
    return Meridian(s, arc, diam, (t0, t1))
