import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from krsolve.errors import ConfigError
from krsolve.geometry import build_grid, divisor_weight, fs_potential, make_divisor
from krsolve.invariants import (alpha_lower_bound, ball_volumes, cone_window, diameter_sweep, lambda1,
                                mt_fit, noncollapse_a, potential_family, smoothing_constant)
from krsolve.oracle import soliton_coefficient, solve_football, to_radial
from krsolve.problem import fs_setting

GRID = build_grid(1024, 12.0)
FS = fs_potential(GRID)


def test_lambda1_round_sphere():
    rep = lambda1(FS)
    assert abs(rep.lambda1 - 1.0) < 1e-4
    # eigenfunction is tau - 1 up to sign and normalization
    f = rep.eigenfunction
    corr = np.corrcoef(f, FS.du - 1.0)[0, 1]
    assert abs(abs(corr) - 1.0) < 1e-6


@pytest.mark.parametrize("which", ["teardrop", "football", "twisted_football"])
def test_lambda1_equals_beta_on_solitons(which):
    # tau - alpha0/beta is an eigenfunction of the drift Laplacian with eigenvalue beta
    if which == "teardrop":
        sol = soliton_coefficient(0.5)[1]
    elif which == "football":
        sol = solve_football(0.0, 0.5)
    else:
        sol = solve_football(0.8, 0.6)
    lam = lambda1(to_radial(sol, GRID), sol.c).lambda1
    assert abs(lam - sol.beta) < 1e-3


def test_ball_volumes_on_round_sphere():
    r = np.array([0.3, 1.0])
    exact = 2 * math.pi * (1 - np.cos(r))
    _, _, v = ball_volumes(FS, 0.0, centers=[0.0, 0.7, math.pi / 2, math.pi], radii=r)
    assert np.max(np.abs(v - exact[None, :])) < 5e-5
    # interior centers go through the exponential-map kernel
    assert np.max(np.abs(v[1:3] - exact[None, :])) < 1e-6
    assert abs(noncollapse_a(FS) - 2 * math.pi * (1 - math.cos(1.0))) < 1e-4


def test_smoothing_constant():
    assert smoothing_constant(1.0, 4 * math.pi, 1.0, 1, 2.888, 1.0) == pytest.approx(14.0587, abs=1e-3)
    with pytest.raises(ConfigError):
        smoothing_constant(1.0, 4 * math.pi, 1.0, 1, 0.0, 1.0)


def test_alpha_brackets_contain_known_thresholds():
    est = alpha_lower_bound(FS)
    assert est.bracket[0] <= 0.5 <= est.bracket[1]
    D = divisor_weight(make_divisor(["0"]), FS, 0.5)
    est = alpha_lower_bound(FS, D, 0.5)
    # a log pole of full mass at the weighted point: integrable iff 4 alpha + 1 < 2
    assert est.bracket[0] <= 0.25 <= est.bracket[1]
    assert est.to_json()["alpha_estimate"] == est.alpha


unit = st.floats(min_value=0.05, max_value=1.0)


@given(unit, st.floats(min_value=0.05, max_value=0.9), st.floats(min_value=0.0, max_value=0.09), unit, unit)
@settings(max_examples=200, deadline=None)
def test_cone_window_shrinks_as_C_grows(lam, C, dC, a0, aD):
    w1 = cone_window(lam, C, a0, aD)
    w2 = cone_window(lam, C + dC, a0, aD)
    assume(not w2.empty)
    assert not w1.empty
    assert w1.beta_min <= w2.beta_min + 1e-15
    assert w1.beta_max >= w2.beta_max - 1e-15
    assert 0.0 <= w1.beta_min < w1.beta_max <= 1.0


@given(unit, st.floats(min_value=0.05, max_value=0.9), unit, unit, unit)
@settings(max_examples=100, deadline=None)
def test_cone_window_grows_with_alpha(lam, C, a0, aD, t):
    w1 = cone_window(lam, C, a0 * t, aD * t)
    w2 = cone_window(lam, C, a0, aD)
    if not w1.empty:
        assert not w2.empty and w2.beta_max >= w1.beta_max


def test_cone_window_values():
    w = cone_window(0.5, 0.4, 1.0, 2.0)
    assert w.beta_min == pytest.approx(0.5 / 0.6) and w.beta_max == 1.0
    w = cone_window(0.5, 0.4, 0.2, 2.0)
    assert w.empty and w.reasons
    w = cone_window(1.2, 0.4, 0.5, 0.5)
    assert w.empty and math.isnan(w.beta_min)
    w = cone_window(0.5, 0.6, 1.0, 1.0, R_equals_one=True)
    assert any("C_tilde < lambda" in r for r in w.r_one.reasons)
    w = cone_window(0.9, 0.2, 1.0, 1.0, R_equals_one=True)
    assert not w.r_one.empty and w.r_one.beta_max == 1.0
    js = w.to_json()
    assert set(js) >= {"window", "empty", "inputs", "reasons", "r_one_window"}


def test_moser_trudinger_fit_at_twisted_soliton():
    g = build_grid(512, 12.0)
    st = fs_setting(g, 0.5)
    fam = potential_family(st.base, 40, seed=1)
    assert len(fam) == 40
    assert all(np.min(st.base.d2u + g.d2(p)) > 0 for p in fam)
    fit = mt_fit(fam, st)
    assert fit.ok
    assert fit.C1 > 0 and fit.C1_mu > 0
    assert np.all(fit.F + fit.C2 >= fit.C1 * fit.J - 1e-9)


def test_moser_trudinger_fit_detects_a_destabilizing_family():
    # at the round metric with beta = 1 the automorphism directions give F = 0
    # along a family with J -> inf, so no positive slope survives
    g = build_grid(512, 12.0)
    st = fs_setting(g, 1.0)
    s = g.nodes
    # pullbacks of the round metric under z -> e^a z
    fam = [2.0 * np.logaddexp(0.0, s + a) - 2.0 * np.logaddexp(0.0, s) - a for a in (0.5, 1.0, 2.0)]
    fit = mt_fit(fam, st)
    assert fit.C1 < 1e-3


def test_diameter_sweep_constant():
    out = diameter_sweep((0.5, 1.0), grid=build_grid(512, 12.0), epsilons=list(np.geomspace(1.0, 1e-3, 13)))
    assert abs(out["rows"][-1]["diam_sqrt_beta"] - math.pi) < 1e-10
    assert out["spread"] < 0.05
