import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krsolve.errors import ConfigError
from krsolve.functionals import (aubin_yau, energy_report, functional_checks, j_tilde_path, k_energy_twisted,
                                 linear_path, quadratic_path)
from krsolve.geometry import build_grid, fs_potential, potential_from_u
from krsolve.problem import fs_setting
from krsolve.twist import smooth_twist

GRID = build_grid(512, 12.0)
FS = fs_potential(GRID)


def bump(coeffs, width):
    s = GRID.nodes
    out = np.zeros_like(s)
    for k, a in enumerate(coeffs, start=1):
        out += a * np.cos(k * np.arctan(np.sinh(s / 2)))
    # fast decay so nothing is lost at the truncation of the line
    return out * np.exp(-(s / width) ** 2)


def admissible(phi):
    return np.min(FS.d2u + GRID.d2(phi)) > 0


coeff = st.lists(st.floats(min_value=-0.3, max_value=0.3), min_size=1, max_size=4)


@given(coeff, st.floats(min_value=1.0, max_value=3.0))
@settings(max_examples=40, deadline=None)
def test_I_equals_twice_J(coeffs, width):
    phi = bump(coeffs, width)
    if not admissible(phi):
        return
    I, J, It, Jt = aubin_yau(phi, FS)
    assert abs(I - 2.0 * J) < 1e-10 * max(1.0, I)
    assert I >= -1e-14 and J >= -1e-14


@given(coeff, st.floats(min_value=1.5, max_value=3.0), st.floats(min_value=-1.5, max_value=1.5))
@settings(max_examples=40, deadline=None)
def test_twisted_chain(coeffs, width, c):
    # 0 <= I_tilde - J_tilde and J_tilde <= I_tilde
    phi = bump(coeffs, width)
    if not admissible(phi):
        return
    I, J, It, Jt = aubin_yau(phi, FS, c)
    assert It - Jt >= -1e-10
    assert Jt >= -1e-10


def test_zero_potential_has_zero_energies():
    rep = energy_report(np.zeros(GRID.n), fs_setting(GRID, 0.5, 0.3))
    for v in (rep.I, rep.J, rep.I_tilde, rep.J_tilde, rep.mu_tilde, rep.F_hat):
        assert abs(v) < 1e-14


def test_j_tilde_is_path_independent():
    phi = bump([0.2, -0.1], 2.0)
    psi = bump([0.0, 0.15, 0.05], 3.0)
    c = 0.7
    lin = j_tilde_path(FS, c, linear_path(phi, FS), 48)
    quad = j_tilde_path(FS, c, lambda t: quadratic_path(phi, psi, FS)(t), 48)
    assert abs(lin - quad) < 1e-9
    assert abs(lin - aubin_yau(phi, FS, c, 48)[3]) < 1e-9


def test_k_energy_is_path_independent():
    setting = fs_setting(GRID, 0.6, 0.4)
    phi = bump([0.2, -0.1], 2.0)
    psi = bump([0.1], 2.5)
    a = k_energy_twisted(phi, setting, 48)
    b = k_energy_twisted(phi, setting, 48, path=quadratic_path(phi, psi, FS))
    assert abs(a - b) < 1e-8


def test_family_checks_and_chain_constants():
    family = [bump([a, b], w) for a, b, w in ((0.2, 0.0, 2.0), (-0.1, 0.1, 2.5), (0.05, -0.05, 1.5))]
    f = 0.2 * (2 * FS.d2u - 1)
    f -= f.max()
    s1 = fs_setting(GRID, 0.5, 0.0)
    from krsolve.problem import Setting
    s2 = Setting(FS, 0.5, 0.0, smooth_twist(0.5, f))
    out = functional_checks(family, FS, c=0.5, twist_pair=(s1, s2, (1 - 0.5) * f), base_shift=family[0])
    assert out["failures"] == []
    assert 0 < out["C1"] <= out["C2"] < 1


def test_path_must_stay_admissible():
    with pytest.raises(Exception):
        aubin_yau(-3.0 * FS.u, FS)
    with pytest.raises(ConfigError):
        aubin_yau(np.zeros(GRID.n), FS, n_path=4)
