import math

import numpy as np
import pytest

from krsolve.conical import (RegularizationSchedule, cone_slope_fit, current_limit_check, default_epsilons,
                             solve_conical)
from krsolve.errors import ConfigError
from krsolve.geometry import build_grid, divisor_weight, fs_potential, make_divisor
from krsolve.oracle import oracle_diameter, soliton_coefficient, solve_football, to_radial

GRID = build_grid(512, 12.0)
U0 = fs_potential(GRID)
EPS = default_epsilons(13, 1e-3)


def conical(points, nu=0.5):
    D = divisor_weight(make_divisor(points), U0, nu)
    return solve_conical(U0, nu, D, schedule=RegularizationSchedule.build(nu, D, U0, EPS))


@pytest.fixture(scope="module")
def teardrop0():
    return conical(["0"])


def test_teardrop_limit_matches_closed_form(teardrop0):
    sol = teardrop0
    c, orc, _ = soliton_coefficient(0.5)
    assert sol.completed
    assert abs(sol.c - c) < 5e-3
    assert abs(sol.cone_slope - 0.5) < 0.02
    assert abs(sol.alpha_inf - 1.0) < 1e-5
    assert abs(sol.trace[-1].diameter - oracle_diameter(orc)) < 0.02
    tau = sol.u.du
    m = (tau > 0.1) & (tau < 1.9)
    assert np.max(np.abs(sol.u.d2u[m] - orc.v(tau[m]))) < 5e-3


def test_cone_at_infinity_mirrors_cone_at_zero(teardrop0):
    sol = conical(["inf"])
    assert sol.completed
    assert abs(sol.c + teardrop0.c) < 1e-9
    assert abs(sol.trace[-1].diameter - teardrop0.trace[-1].diameter) < 1e-8
    assert abs(sol.cone_slope - teardrop0.cone_slope) < 1e-8


def test_symmetric_football():
    sol = conical(["0", "inf"])
    assert sol.completed and sol.c == 0.0
    assert abs(sol.cone_slope - sol.alpha_inf) < 1e-9
    assert abs(sol.cone_slope - 0.5) < 0.01
    assert abs(sol.trace[-1].diameter - math.pi / math.sqrt(0.5)) < 0.02


def test_current_pairing_recovers_delta_mass(teardrop0):
    out = current_limit_check(teardrop0)
    assert out["failures"] == []
    cut = [it for it in out["items"] if "delta_mass" in it][0]
    assert abs(cut["delta_mass"] - 2 * math.pi * 0.5) < 1e-2


def test_trace_is_cauchy(teardrop0):
    gaps = teardrop0.cauchy_gaps()
    assert gaps[-1] < gaps[0]
    assert teardrop0.laplacian_constant >= 1.0
    assert 0.5 < teardrop0.holder_exponent() < 1.5


def test_cone_slope_fit_on_exact_profiles():
    g = build_grid(2048, 30.0)
    _, orc, _ = soliton_coefficient(0.5)
    u = to_radial(orc, g)
    assert abs(cone_slope_fit(u, 0) - 0.5) < 1e-4
    assert abs(cone_slope_fit(u, -1) - 1.0) < 1e-4
    v = to_radial(solve_football(0.0, 0.3), g)
    assert abs(cone_slope_fit(v, 0) - 0.3) < 1e-4


def test_schedule_validation():
    with pytest.raises(ConfigError):
        RegularizationSchedule([1.0, 0.5, 0.7], 0.5, 0.5, 0.5)
    with pytest.raises(ConfigError):
        RegularizationSchedule([], 0.5, 0.5, 0.5)
    D = divisor_weight(make_divisor(["0"]), U0, 0.5)
    with pytest.raises(ConfigError):
        solve_conical(U0, 1.0, D)


def test_limit_does_not_depend_on_schedule(teardrop0):
    D = teardrop0.divisor
    sched = RegularizationSchedule.build(0.5, D, U0, list(np.geomspace(1.0, 1e-3, 7)))
    other = solve_conical(U0, 0.5, D, schedule=sched)
    assert other.completed
    assert abs(other.c - teardrop0.c) < 1e-4
    assert abs(other.trace[-1].diameter - teardrop0.trace[-1].diameter) < 1e-4
    assert np.max(np.abs(other.phi - teardrop0.phi)) < 1e-4
