"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``KRSOLVE_PURE_NUMPY=1`` (or ``NUMBA_DISABLE_JIT=1``) before import to
force the numpy implementations.  Both paths compute the same quantities with
the same algorithms; ``benchmarks/bench_kernels.py`` compares them.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("KRSOLVE_PURE_NUMPY", "0") not in ("", "0") or \
    os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0")

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# Gauss-Legendre rule used by the chi quadrature (per geometric panel).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# finite-difference stencils on a uniform computational grid

def _stencil_numpy(f, c1, c2, b1, b2, h):
    # stencils act on differences f_j - f_i so that rounding scales with the
    # local variation of f rather than with |f| (matters where u'' is tiny)
    n = f.shape[0]
    d1 = np.empty(n)
    d2 = np.empty(n)
    fc = f[2:n - 2]
    d1[2:n - 2] = (c1[0] * (f[0:n - 4] - fc) + c1[1] * (f[1:n - 3] - fc)
                   + c1[3] * (f[3:n - 1] - fc) + c1[4] * (f[4:n] - fc)) / h
    d2[2:n - 2] = (c2[0] * (f[0:n - 4] - fc) + c2[1] * (f[1:n - 3] - fc)
                   + c2[3] * (f[3:n - 1] - fc) + c2[4] * (f[4:n] - fc)) / (h * h)
    m = b1.shape[1]
    for i in range(2):
        left = f[:m] - f[i]
        right = f[n - 1:n - 1 - m:-1] - f[n - 1 - i]
        d1[i] = b1[i] @ left / h
        d2[i] = b2[i] @ left / (h * h)
        # mirrored stencils at the right end
        d1[n - 1 - i] = -(b1[i] @ right) / h
        d2[n - 1 - i] = (b2[i] @ right) / (h * h)
    return d1, d2


def _chi_numpy(t, eps2, nu, gx, gw):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    one_m = 1.0 - nu
    base = eps2 ** one_m
    a = np.zeros_like(t)
    b = np.minimum(t, eps2)
    # panels [0, eps2], then geometric doubling up to t
    while True:
        active = b > a
        if not active.any():
            break
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        r = mid[:, None] + half[:, None] * gx[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            val = ((eps2 + r) ** one_m - base) / r
        out += np.where(active, half * (val @ gw), 0.0)
        a = b
        b = np.minimum(t, 2.0 * np.maximum(b, eps2))
    return out / one_m


def _ball_numpy(xg, rho, drho, gauss, wt, x0, psi, radii, h, nsteps):
    rho0 = np.interp(x0, xg, rho)
    k = rho0 * np.sin(psi)
    x = np.full(psi.shape, x0)
    p = np.cos(psi)
    jac = np.zeros_like(psi)
    dj = np.ones_like(psi)
    alive = np.ones(psi.shape, dtype=bool)
    acc = np.zeros_like(psi)
    vols = np.zeros(radii.shape[0])
    ir = 0
    xmax = xg[-1]

    def rhs(x, p, jac, dj):
        xr = np.abs(x)
        xr = np.where(xr > xmax, 2.0 * xmax - xr, xr)
        r = np.maximum(np.interp(xr, xg, rho), 1e-300)
        dr = np.interp(xr, xg, drho)
        g = np.interp(xr, xg, gauss)
        return p, k * k * dr / r ** 3, dj, -g * jac

    def weight(x):
        xr = np.abs(x)
        xr = np.where(xr > xmax, 2.0 * xmax - xr, xr)
        return np.interp(xr, xg, wt)

    f_old = np.where(alive, jac * weight(x), 0.0)
    for step in range(nsteps):
        k1 = rhs(x, p, jac, dj)
        k2 = rhs(x + 0.5 * h * k1[0], p + 0.5 * h * k1[1], jac + 0.5 * h * k1[2],
                 dj + 0.5 * h * k1[3])
        k3 = rhs(x + 0.5 * h * k2[0], p + 0.5 * h * k2[1], jac + 0.5 * h * k2[2],
                 dj + 0.5 * h * k2[3])
        k4 = rhs(x + h * k3[0], p + h * k3[1], jac + h * k3[2], dj + h * k3[3])
        x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        jac = jac + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        dj = dj + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        # stop accumulating past the first conjugate point
        alive &= jac > 0.0
        f_new = np.where(alive, jac * weight(x), 0.0)
        acc += 0.5 * h * (f_old + f_new)
        f_old = f_new
        tnow = (step + 1) * h
        while ir < radii.shape[0] and tnow >= radii[ir] - 1e-12:
            vols[ir] = acc.sum()
            ir += 1
    while ir < radii.shape[0]:
        vols[ir] = acc.sum()
        ir += 1
    return vols


if HAVE_NUMBA:

    @njit(cache=True)
    def _stencil_numba(f, c1, c2, b1, b2, h):
        n = f.shape[0]
        m = b1.shape[1]
        d1 = np.empty(n)
        d2 = np.empty(n)
        hh = h * h
        for i in range(2, n - 2):
            fi = f[i]
            a = f[i - 2] - fi
            b = f[i - 1] - fi
            c = f[i + 1] - fi
            d = f[i + 2] - fi
            d1[i] = (c1[0] * a + c1[1] * b + c1[3] * c + c1[4] * d) / h
            d2[i] = (c2[0] * a + c2[1] * b + c2[3] * c + c2[4] * d) / hh
        for i in range(2):
            a1 = 0.0
            a2 = 0.0
            z1 = 0.0
            z2 = 0.0
            fl = f[i]
            fr = f[n - 1 - i]
            for j in range(m):
                a1 += b1[i, j] * (f[j] - fl)
                a2 += b2[i, j] * (f[j] - fl)
                z1 += b1[i, j] * (f[n - 1 - j] - fr)
                z2 += b2[i, j] * (f[n - 1 - j] - fr)
            d1[i] = a1 / h
            d2[i] = a2 / hh
            d1[n - 1 - i] = -z1 / h
            d2[n - 1 - i] = z2 / hh
        return d1, d2

    @njit(cache=True)
    def _chi_numba(t, eps2, nu, gx, gw):
        one_m = 1.0 - nu
        base = eps2 ** one_m
        out = np.zeros(t.shape[0])
        for i in range(t.shape[0]):
            ti = t[i]
            a = 0.0
            b = min(ti, eps2)
            total = 0.0
            while b > a:
                mid = 0.5 * (a + b)
                half = 0.5 * (b - a)
                for q in range(gx.shape[0]):
                    r = mid + half * gx[q]
                    total += half * gw[q] * ((eps2 + r) ** one_m - base) / r
                a = b
                b = min(ti, 2.0 * max(b, eps2))
            out[i] = total / one_m
        return out

    @njit(cache=True)
    def _interp_idx(xg, x):
        n = xg.shape[0]
        j = np.searchsorted(xg, x) - 1
        if j < 0:
            j = 0
        elif j > n - 2:
            j = n - 2
        w = (x - xg[j]) / (xg[j + 1] - xg[j])
        if w < 0.0:
            w = 0.0
        elif w > 1.0:
            w = 1.0
        return j, w

    @njit(cache=True)
    def _fold(x, xmax):
        xr = abs(x)
        if xr > xmax:
            xr = 2.0 * xmax - xr
        return xr

    @njit(cache=True)
    def _rhs(xg, rho, drho, gauss, k, x, p, jac, dj, xmax):
        xr = _fold(x, xmax)
        j, w = _interp_idx(xg, xr)
        r = (1 - w) * rho[j] + w * rho[j + 1]
        if r < 1e-300:
            r = 1e-300
        dr = (1 - w) * drho[j] + w * drho[j + 1]
        g = (1 - w) * gauss[j] + w * gauss[j + 1]
        return p, k * k * dr / (r * r * r), dj, -g * jac

    @njit(cache=True)
    def _weight(xg, wt, x, xmax):
        xr = _fold(x, xmax)
        j, w = _interp_idx(xg, xr)
        return (1 - w) * wt[j] + w * wt[j + 1]

    @njit(cache=True)
    def _ball_numba(xg, rho, drho, gauss, wt, x0, psi, radii, h, nsteps):
        xmax = xg[-1]
        j0, w0 = _interp_idx(xg, x0)
        rho0 = (1 - w0) * rho[j0] + w0 * rho[j0 + 1]
        vols = np.zeros(radii.shape[0])
        for q in range(psi.shape[0]):
            k = rho0 * np.sin(psi[q])
            x = x0
            p = np.cos(psi[q])
            jac = 0.0
            dj = 1.0
            acc = 0.0
            f_old = 0.0
            ir = 0
            alive = True
            for step in range(nsteps):
                a0, a1, a2, a3 = _rhs(xg, rho, drho, gauss, k, x, p, jac, dj, xmax)
                b0, b1, b2, b3 = _rhs(xg, rho, drho, gauss, k, x + 0.5 * h * a0,
                                      p + 0.5 * h * a1, jac + 0.5 * h * a2,
                                      dj + 0.5 * h * a3, xmax)
                c0, c1, c2, c3 = _rhs(xg, rho, drho, gauss, k, x + 0.5 * h * b0,
                                      p + 0.5 * h * b1, jac + 0.5 * h * b2,
                                      dj + 0.5 * h * b3, xmax)
                e0, e1, e2, e3 = _rhs(xg, rho, drho, gauss, k, x + h * c0, p + h * c1,
                                      jac + h * c2, dj + h * c3, xmax)
                x += h / 6.0 * (a0 + 2 * b0 + 2 * c0 + e0)
                p += h / 6.0 * (a1 + 2 * b1 + 2 * c1 + e1)
                jac += h / 6.0 * (a2 + 2 * b2 + 2 * c2 + e2)
                dj += h / 6.0 * (a3 + 2 * b3 + 2 * c3 + e3)
                if jac <= 0.0:
                    alive = False
                f_new = jac * _weight(xg, wt, x, xmax) if alive else 0.0
                acc += 0.5 * h * (f_old + f_new)
                f_old = f_new
                tnow = (step + 1) * h
                while ir < radii.shape[0] and tnow >= radii[ir] - 1e-12:
                    vols[ir] += acc
                    ir += 1
            while ir < radii.shape[0]:
                vols[ir] += acc
                ir += 1
        return vols

    _stencil_impl = _stencil_numba
    _chi_impl = _chi_numba
    _ball_impl = _ball_numba
else:
    _stencil_impl = _stencil_numpy
    _chi_impl = _chi_numpy
    _ball_impl = _ball_numpy


def stencil_derivatives(f, c1, c2, b1, b2, h, backend=None):
    """First and second derivatives of ``f`` on a uniform grid of spacing ``h``.

    ``c1``/``c2`` are 5-point central weights, ``b1``/``b2`` hold the one-sided
    weights for the two nodes nearest the left end (mirrored on the right).
    """
    f = np.ascontiguousarray(f, dtype=float)
    if backend == "numpy" or (backend is None and not HAVE_NUMBA):
        return _stencil_numpy(f, c1, c2, b1, b2, h)
    return _stencil_impl(f, c1, c2, b1, b2, float(h))


def chi_quadrature(t, eps2, nu, backend=None):
    """Evaluate (1/(1-nu)) * int_0^t ((eps2+r)^(1-nu) - eps2^(1-nu))/r dr nodewise."""
    t = np.ascontiguousarray(np.atleast_1d(t), dtype=float)
    if backend == "numpy" or (backend is None and not HAVE_NUMBA):
        return _chi_numpy(t, float(eps2), float(nu), _GL_X, _GL_W)
    return _chi_impl(t, float(eps2), float(nu), _GL_X, _GL_W)


def geodesic_ball_volumes(xg, rho, drho, gauss, wt, x0, radii, n_dir=64, h=1e-3,
                          backend=None):
    """Weighted areas of geodesic balls about an off-pole point of a surface of
    revolution ``dx^2 + rho(x)^2 dtheta^2`` via the exponential map.

    Directions are sampled at midpoints of ``(0, pi)``; the reflection
    ``psi -> -psi`` supplies the other half.  Jacobi fields stop contributing
    past their first zero.
    """
    radii = np.ascontiguousarray(np.sort(np.asarray(radii, dtype=float)))
    dpsi = np.pi / n_dir
    psi = (np.arange(n_dir) + 0.5) * dpsi
    nsteps = int(np.ceil(radii[-1] / h))
    args = [np.ascontiguousarray(a, dtype=float) for a in (xg, rho, drho, gauss, wt)]
    if backend == "numpy" or (backend is None and not HAVE_NUMBA):
        vols = _ball_numpy(*args, float(x0), psi, radii, h, nsteps)
    else:
        vols = _ball_impl(*args, float(x0), psi, radii, float(h), nsteps)
    return 2.0 * dpsi * vols
