import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krsolve.errors import CohomologyError, ConfigError, PositivityError
from krsolve.geometry import (VOLUME, build_grid, divisor_norm_const_exact, divisor_weight, fs_moment_profile,
                              fs_potential, integrate, integrate_ds, make_divisor, meridian_metrics,
                              potential_from_u, ricci_density, ricci_potential, theta_potential, theta_shift,
                              theta_shift_derivative)


def test_grid_is_symmetric_and_weights_integrate_constants():
    g = build_grid(257, 10.0, stretch=1.5)
    assert np.allclose(g.nodes, -g.nodes[::-1])
    assert g.nodes[0] == -10.0 and g.nodes[-1] == 10.0
    assert abs(g.weights.sum() - 20.0) < 1e-12


@pytest.mark.parametrize("stretch", [0.0, 2.0])
def test_derivatives_fourth_order(stretch):
    errs = []
    for n in (257, 513):
        g = build_grid(n, 8.0, stretch)
        f = np.sin(g.nodes) * np.exp(-0.05 * g.nodes ** 2)
        d1, d2 = g.derivatives(f)
        e1 = np.cos(g.nodes) * np.exp(-0.05 * g.nodes ** 2) - 0.1 * g.nodes * f
        errs.append(np.max(np.abs(d1 - e1)))
    assert errs[0] / errs[1] > 12.0      # ~16 for a fourth-order stencil


def test_fs_potential_closed_form(fs1024):
    u = fs1024
    assert np.max(np.abs(u.d2u - fs_moment_profile(u.du))) < 1e-15
    d1, d2 = u.grid.derivatives(u.u)
    assert np.max(np.abs(d1 - u.du)) < 1e-6
    assert abs(integrate(1.0, u) - VOLUME) < 1e-12


def test_integrate_moment_identity(fs1024):
    # int f(tau) omega = 2 pi int_0^2 f(tau) dtau for radial functions of tau
    u = fs1024
    assert abs(integrate(u.du ** 2, u) - 2 * math.pi * 8.0 / 3.0) < 1e-8
    assert abs(integrate(np.exp(u.du), u) - 2 * math.pi * (math.e ** 2 - 1)) < 1e-8


def test_integrate_ds_tails(grid1024):
    s = grid1024.nodes
    assert abs(integrate_ds(1.0 / np.cosh(s) ** 2, grid1024) - 2.0) < 1e-10


@given(st.floats(min_value=-4.0, max_value=4.0))
@settings(max_examples=30, deadline=None)
def test_theta_normalization(c):
    u = fs_potential(build_grid(512, 12.0))
    th = c * u.du + theta_shift(c)
    assert abs(integrate(np.exp(th), u) / VOLUME - 1.0) < 1e-8
    # quadrature route
    th2, a = theta_potential(u, c)
    assert abs(a - theta_shift(c)) < 1e-8


def test_theta_shift_derivative():
    for c in (-2.0, -1e-6, 0.0, 0.3, 1.5):
        h = 1e-6
        fd = (theta_shift(c + h) - theta_shift(c - h)) / (2 * h)
        assert abs(fd - theta_shift_derivative(c)) < 1e-6


def test_ricci_potential_of_round_metric_vanishes(fs1024):
    assert np.max(np.abs(ricci_potential(fs1024, 1.0))) < 1e-12
    assert np.max(np.abs(ricci_density(fs1024) - fs1024.d2u)) < 1e-8


def test_ricci_potential_cohomology_mismatch(fs512):
    with pytest.raises(CohomologyError):
        ricci_potential(fs512, 0.5)


def test_positivity_error():
    g = build_grid(128, 8.0)
    u = potential_from_u(g, 0.1 * g.nodes ** 2 - 0.3 * np.cos(g.nodes))
    with pytest.raises(PositivityError):
        u.check()


@pytest.mark.parametrize("points", [["0"], ["inf"], ["0", "inf"]])
@pytest.mark.parametrize("nu", [0.25, 0.5])
def test_divisor_normalization_matches_closed_form(fs1024, points, nu):
    D = divisor_weight(make_divisor(points), fs1024, nu)
    assert D.lam == (1.0 if len(points) == 2 else 0.5)
    assert abs(D.norm_const - divisor_norm_const_exact(D, nu)) < 1e-7


def test_divisor_validation(fs512):
    with pytest.raises(ConfigError):
        make_divisor(["1"])
    with pytest.raises(ConfigError):
        divisor_weight(make_divisor(["0"]), fs512, 1.0)


def test_meridian_round_sphere(fs1024):
    m = meridian_metrics(fs1024)
    assert abs(m.diameter - math.pi) < 1e-10
    s0 = fs1024.grid.nodes[512]
    assert abs(m.distance(-1e9, s0) - math.pi / 2) < 1e-3


@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-0.3, max_value=0.3),
       st.floats(min_value=0.5, max_value=3.0))
@settings(max_examples=30, deadline=None)
def test_theta_normalization_is_potential_independent(c, amp, width):
    # int e^{theta_X + X(phi)} omega_phi does not depend on phi, so the
    # per-metric shift equals the base shift (the gap is 4th-order
    # discretization error; width 0.5 bumps need the finer grid)
    g = build_grid(4096, 12.0)
    u0 = fs_potential(g)
    phi = amp * np.exp(-(g.nodes / width) ** 2) * np.sin(g.nodes)
    if np.min(u0.d2u + g.d2(phi)) <= 0:
        return
    u = u0.plus(phi)
    _, a_phi = theta_potential(u, c)
    assert abs(a_phi - theta_shift(c)) < 1e-8
