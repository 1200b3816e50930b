import json
import os
import subprocess
import sys

import numpy as np
import pytest

from krsolve import _kernels
from krsolve.geometry import _B1, _B2, _C1, _C2, build_grid, fs_potential
from krsolve.invariants import _revolution_profile

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
def test_stencil_backends_agree():
    g = build_grid(1025, 12.0)
    f = fs_potential(g).u
    a = _kernels.stencil_derivatives(f, _C1, _C2, _B1, _B2, g.h_xi, backend="numpy")
    b = _kernels.stencil_derivatives(f, _C1, _C2, _B1, _B2, g.h_xi)
    # summation order differs; roundoff scales like |f| eps / h^2
    tol = 1e-14 * np.max(np.abs(f)) / g.h_xi ** 2
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) < tol


@needs_numba
def test_chi_backends_agree():
    t = np.geomspace(1e-10, 5.0, 500)
    a = _kernels.chi_quadrature(t, 1e-3, 0.4, backend="numpy")
    b = _kernels.chi_quadrature(t, 1e-3, 0.4)
    assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))) < 1e-13


@needs_numba
def test_ball_backends_agree():
    prof = _revolution_profile(fs_potential(build_grid(512, 12.0)), 0.3)
    radii = np.array([0.2, 0.6, 1.0])
    a = _kernels.geodesic_ball_volumes(*prof, 1.1, radii, n_dir=16, h=2e-3, backend="numpy")
    b = _kernels.geodesic_ball_volumes(*prof, 1.1, radii, n_dir=16, h=2e-3)
    assert np.max(np.abs(a - b)) < 1e-10


def test_pure_numpy_flag_selects_fallback():
    code = (
        "import json, numpy as np\n"
        "from krsolve import _kernels\n"
        "from krsolve.geometry import build_grid, fs_potential\n"
        "from krsolve.problem import fs_setting\n"
        "from krsolve.solver import newton_solve\n"
        "g = build_grid(256, 12.0)\n"
        "r = newton_solve(np.zeros(g.n), fs_setting(g, 0.5, 0.3), 1.0)\n"
        "print(json.dumps({'backend': _kernels.BACKEND, 'res': r.residual_sup, 'c0': float(r.phi[128])}))\n"
    )
    env = dict(os.environ, KRSOLVE_PURE_NUMPY="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    got = json.loads(out.stdout)
    assert got["backend"] == "numpy"
    assert got["res"] < 1e-10
    env["KRSOLVE_PURE_NUMPY"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    ref = json.loads(out.stdout)
    assert abs(ref["c0"] - got["c0"]) < 1e-10
