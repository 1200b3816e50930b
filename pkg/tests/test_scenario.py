import numpy as np
import pytest

from krsolve.errors import ConfigError
from krsolve.scenario import Scenario, load_scenarios


def test_defaults_fill_in():
    sc = Scenario.from_dict({})
    assert sc.model["lambda"] == 0.5 and sc.grid["n"] == 1024
    assert sc.newton_settings().residual_tol == 1e-10


@pytest.mark.parametrize("d", [
    {"model": {"beta": 0.0}},
    {"model": {"nu": 1.0}},
    {"model": {"divisor": ["0", "inf"], "lambda": 0.5}},
    {"model": {"divisor": ["0", "0"]}},
    {"model": {"twist": "wavy"}},
    {"model": {"f_eta": {"shape": "square"}}},
    {"grid": {"n": 32}},
    {"schedules": {"t": []}},
    {"schedules": {"epsilons": [0.1, 0.5]}},
    {"newton": {"damping": 2.0}},
    {"extra": 1},
])
def test_validation(d):
    with pytest.raises(ConfigError):
        Scenario.from_dict(d)


def test_pair_divisor_sets_lambda_one():
    sc = Scenario.from_dict({"model": {"divisor": "inf,0"}})
    assert sc.model["lambda"] == 1.0 and sc.model["divisor"] == ["0", "inf"]


@pytest.mark.parametrize("shape", ["density", "sech", "bump"])
def test_f_eta_has_zero_sup(shape):
    sc = Scenario.from_dict({"model": {"beta": 0.5, "f_eta": {"shape": shape, "amplitude": 0.05}},
                             "grid": {"n": 128}})
    g = sc.build_grid()
    f = sc.f_eta(g)
    assert abs(f.max()) < 1e-15
    assert sc.twist(g).kind == "smooth"


def test_batch_inherits_defaults(tmp_path):
    p = tmp_path / "b.yaml"
    p.write_text("defaults: {grid: {n: 128}}\nscenarios:\n  - {name: x}\n  - {name: y, grid: {n: 256}}\n")
    a, b = load_scenarios(p)
    assert a.grid["n"] == 128 and b.grid["n"] == 256
    p.write_text("scenarios:\n  - {name: x}\n  - {name: x}\n")
    with pytest.raises(ConfigError):
        load_scenarios(p)


def test_non_semipositive_twist_is_rejected():
    sc = Scenario.from_dict({"model": {"beta": 0.5, "f_eta": {"shape": "bump", "amplitude": 0.3}},
                             "grid": {"n": 128}})
    with pytest.raises(ConfigError):
        sc.twist(sc.build_grid())
