"""Compare the numba and pure-numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time of each path and the largest difference between
their outputs.  The numba timings exclude the first (compiling) call.
"""

import argparse
import time

import numpy as np

from krsolve import _kernels
from krsolve.geometry import _B1, _B2, _C1, _C2, build_grid, fs_potential
from krsolve.invariants import _revolution_profile


def best(fn, repeat):
    fn()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return min(ts), out


def cases():
    g = build_grid(8193, 12.0)
    u = fs_potential(g)
    f = u.u
    h = g.h_xi
    t = np.geomspace(1e-12, 1.0, 20000)
    prof = _revolution_profile(fs_potential(build_grid(2048, 12.0)), 0.0)
    radii = np.linspace(0.1, 1.0, 10)
    yield ("stencil_derivatives (n=8193)",
           lambda b: _kernels.stencil_derivatives(f, _C1, _C2, _B1, _B2, h, backend=b))
    yield ("chi_quadrature (20000 pts)",
           lambda b: _kernels.chi_quadrature(t, 1e-4, 0.5, backend=b))
    yield ("geodesic_ball_volumes (64 dirs)",
           lambda b: _kernels.geodesic_ball_volumes(*prof, 1.0, radii, backend=b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases():
        tn, out_n = best(lambda: fn("numpy"), args.repeat)
        if _kernels.HAVE_NUMBA:
            tb, out_b = best(lambda: fn(None), args.repeat)
            a = np.concatenate([np.ravel(x) for x in (out_n if isinstance(out_n, tuple) else (out_n,))])
            b = np.concatenate([np.ravel(x) for x in (out_b if isinstance(out_b, tuple) else (out_b,))])
            diff = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))
            print(f"{name:34s} {1e3 * tn:11.3f} {1e3 * tb:11.3f} {tn / tb:8.1f} {diff:10.2e}")
        else:
            print(f"{name:34s} {1e3 * tn:11.3f} {'-':>11s}")


if __name__ == "__main__":
    main()
