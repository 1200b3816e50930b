import math

import numpy as np
import pytest
from scipy.integrate import quad

from krsolve.errors import ConfigError
from krsolve.geometry import build_grid, fs_moment_profile, fs_potential, potential_from_u
from krsolve.problem import Setting, fs_setting
from krsolve.solver import (NewtonSettings, continuity_path, flow_smooth, jacobian_check, newton_solve,
                            r_invariant, r_invariant_exact, residual, volume_normalization_gap)

GRID = build_grid(512, 12.0)


def perturbed_base(amp=0.1):
    s = GRID.nodes
    fs = fs_potential(GRID)
    return potential_from_u(GRID, fs.u + amp * np.exp(-s ** 2 / 4) * np.sin(s))


def test_kahler_einstein_recovery():
    base = perturbed_base()
    st = Setting(base, 1.0, 0.0)
    res = newton_solve(np.zeros(GRID.n), st, 1.0, mode="field")
    assert res.residual_sup < 1e-10
    assert res.iterations <= 10
    assert abs(res.c) < 1e-10
    u = base.plus(res.phi)
    # the solution is the round metric: u'' = tau (2 - tau)/2 in the moment coordinate
    assert np.max(np.abs(u.d2u - fs_moment_profile(u.du))) < 1e-5


def test_quadratic_convergence():
    st = fs_setting(GRID, 0.5, 0.3)
    res = newton_solve(np.zeros(GRID.n), st, 1.0)
    h = res.residual_history
    assert h[-1] < 1e-10
    # once in the basin, r_{k+1} <= C r_k^2 (above the roundoff floor)
    tail = [(a, b) for a, b in zip(h, h[1:]) if a < 1e-2 and b > 1e-10]
    assert tail
    assert all(b <= 10.0 * a * a for a, b in tail)


@pytest.mark.parametrize("beta,c", [(1.0, 0.0), (0.5, 0.3), (0.8, -0.6)])
def test_jacobian_matches_differences(beta, c):
    st = fs_setting(GRID, beta, c)
    phi = 0.05 * np.exp(-GRID.nodes ** 2 / 8)
    assert jacobian_check(phi, st, 1.0) < 1e-6
    assert jacobian_check(phi, st, 0.4, seed=3) < 1e-6


def test_t_zero_is_solvable_and_normalized():
    st = fs_setting(GRID, 0.6, 0.5)
    res = newton_solve(np.zeros(GRID.n), st, 0.0, mode="t0")
    assert res.residual_sup < 1e-10


def test_solution_is_unique_across_initial_guesses():
    st = fs_setting(GRID, 0.5, 0.3)
    a = newton_solve(np.zeros(GRID.n), st, 1.0)
    b = newton_solve(0.1 * np.exp(-GRID.nodes ** 2 / 10), st, 1.0)
    assert np.max(np.abs(a.phi - b.phi)) < 1e-8
    assert abs(volume_normalization_gap(a.phi, st, 1.0)) < 1e-8


def test_continuity_path_identities():
    st = fs_setting(GRID, 0.5, 0.3)
    tr = continuity_path(st, [0.25, 0.5, 0.75, 1.0], lambda1=False)
    assert tr.completed
    assert tr.monotonicity_defect() < 1e-9
    assert np.max(np.abs(tr.identity_defects())) < 1e-5
    rows = tr.rows()
    assert rows[0]["t"] == 0.0 and rows[-1]["t"] == 1.0
    assert all(r["residual_sup"] < 1e-9 for r in rows)


def test_continuity_path_reports_divergence():
    # beta above the greatest Ricci bound for c = 2
    st = fs_setting(GRID, 0.95, 2.0)
    tr = continuity_path(st, [0.5, 1.0], energies=False, lambda1=False)
    assert not tr.completed
    assert tr.diverged_at is not None and 0 < tr.diverged_at <= 1


def test_flow_fixed_point_and_bound():
    u1, rep = flow_smooth(fs_setting(GRID, 1.0, 0.0))
    assert rep.u1_sup < 1e-10
    u1, rep = flow_smooth(fs_setting(GRID, 0.5, 0.3))
    assert rep.u1_sup <= rep.bound
    assert rep.dt_halving_change < 1e-3


def _barycenter_R(c):
    num = quad(lambda t: t * math.exp(c * t), 0, 2)[0]
    den = quad(lambda t: math.exp(c * t), 0, 2)[0]
    return 1.0 / (1.0 + abs(num / den - 1.0))


@pytest.mark.parametrize("c", [-2.0, -0.5, 0.1, 1.0, 3.0])
def test_r_closed_form_against_quadrature(c):
    assert abs(r_invariant_exact(c) - _barycenter_R(c)) < 1e-12
    assert r_invariant_exact(c) == pytest.approx(r_invariant_exact(-c))


def test_r_at_zero_field():
    R, br = r_invariant(0.0, grid=build_grid(256, 12.0))
    assert R == 1.0 and br == (1.0, 1.0)


def test_settings_validation():
    with pytest.raises(ConfigError):
        NewtonSettings(residual_tol=0)
    with pytest.raises(ConfigError):
        NewtonSettings(damping=1.5)
    st = fs_setting(GRID, 0.5, 0.3)
    with pytest.raises(ConfigError):
        newton_solve(np.zeros(GRID.n), st, 1.5)
    with pytest.raises(ConfigError):
        continuity_path(st, [0.5, 0.2])
    with pytest.raises(ConfigError):
        newton_solve(np.zeros(10), st, 1.0)
    assert np.all(np.isfinite(residual(np.zeros(GRID.n), st, 1.0)))
