import math

import numpy as np
import pytest
from scipy.integrate import quad

from krsolve.errors import ConfigError
from krsolve.geometry import build_grid, divisor_weight, fs_potential, integrate_ds, make_divisor
from krsolve.twist import (TwistSpec, chi_derivatives, chi_smoothing, regularized_twist, select_k,
                           smooth_twist)


def test_smooth_twist_mass_matches_class(fs1024):
    tw = smooth_twist(0.6).check(fs1024.grid)
    dens = tw.density(fs1024.grid)
    assert abs(integrate_ds(dens, fs1024.grid) - tw.mass()) < 1e-9
    assert tw.mass() == pytest.approx(0.8)


def test_f_eta_must_touch_zero(fs512):
    g = fs512.grid
    with pytest.raises(ConfigError):
        smooth_twist(0.5, 0.1 * np.ones(g.n) - 0.05).check(g)


@pytest.mark.parametrize("points", [["0"], ["0", "inf"]])
def test_regularized_mass_is_cohomological(fs1024, points):
    D = divisor_weight(make_divisor(points), fs1024, 0.5)
    for eps in (1.0, 0.1, 1e-3):
        dens, mass, _ = regularized_twist(eps, 0.5, D.lam, D, fs1024)
        assert dens.min() >= 0
        assert abs(mass - 2 * math.pi * 2 * D.lam) < 1e-6


def test_conical_twist_delta_mass(fs512):
    D = divisor_weight(make_divisor(["0", "inf"]), fs512, 0.3)
    tw = TwistSpec("conical", 0.7, nu=0.3, divisor=D)
    assert tw.delta_mass() == pytest.approx(2 * math.pi * 0.6)
    assert tw.lam == 1.0


@pytest.mark.parametrize("nu", [0.25, 0.5, 0.8])
@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_chi_against_adaptive_quadrature(nu, eps):
    e2 = eps * eps
    t = np.array([0.0, 1e-6, 0.01, 0.5, 3.0])
    got = chi_smoothing(eps, nu, t)
    for ti, gi in zip(t, got):
        ref = quad(lambda r: ((e2 + r) ** (1 - nu) - e2 ** (1 - nu)) / r, 0, ti, limit=200)[0] / (1 - nu) \
            if ti > 0 else 0.0
        assert abs(gi - ref) < 1e-9 * max(1.0, abs(ref))


def test_chi_derivatives_match_differences():
    eps, nu = 0.3, 0.4
    t = np.array([0.05, 0.5, 2.0])
    h = 1e-5
    d1, d2 = chi_derivatives(eps, nu, t)
    fd1 = (chi_smoothing(eps, nu, t + h) - chi_smoothing(eps, nu, t - h)) / (2 * h)
    assert np.max(np.abs(d1 - fd1)) < 1e-7
    fd2 = (chi_derivatives(eps, nu, t + h)[0] - chi_derivatives(eps, nu, t - h)[0]) / (2 * h)
    assert np.max(np.abs(d2 - fd2)) < 1e-6


def test_select_k_keeps_metric_positive(fs1024):
    D = divisor_weight(make_divisor(["0"]), fs1024, 0.5)
    k, worst = select_k([1.0, 0.1, 0.01], 0.5, D, fs1024)
    assert 0 < k <= 0.5 and worst >= 0.1


def test_twist_validation():
    with pytest.raises(ConfigError):
        TwistSpec("smooth", 1.2)
    with pytest.raises(ConfigError):
        TwistSpec("conical", 0.5, nu=0.5)
    with pytest.raises(ConfigError):
        TwistSpec("bogus")


@pytest.mark.parametrize("nu", [0.3, 0.5, 0.7])
def test_chi_small_eps_limit(nu):
    # int_0^t r^{-nu} dr / (1 - nu) = t^{1-nu} / (1 - nu)^2
    t = np.array([0.01, 0.3, 2.0])
    # the leading correction is eps^{2 - 2 nu} log(t / eps^2)
    got = chi_smoothing(1e-12, nu, t)
    assert np.max(np.abs(got / (t ** (1 - nu) / (1 - nu) ** 2) - 1.0)) < 1e-3
