"""Scenario files: YAML mappings resolved into a validated :class:`Scenario`.

A file holds either one scenario or ``scenarios: [...]`` (cells of a batch),
each optionally inheriting from a top-level ``defaults`` mapping.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import Grid, build_grid, fs_potential, make_divisor, divisor_weight
from .solver import NewtonSettings
from .twist import TwistSpec

DEFAULTS = {
    "name": "scenario",
    "model": {"beta": 1.0, "c": 0.0, "nu": 0.0, "lambda": None, "divisor": ["0"],
              "twist": "smooth", "f_eta": None},
    "grid": {"n": 1024, "s_max": 12.0, "stretch": 0.0},
    "newton": {"residual_tol": 1e-10, "max_iters": 50, "damping": 1.0, "positivity_floor": 1e-12},
    "schedules": {"t": None, "epsilons": None},
    "outputs": {"dir": "out", "formats": ["csv", "json"]},
}

F_ETA_SHAPES = ("density", "sech", "bump")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class Scenario:
    name: str
    model: dict
    grid: dict
    newton: dict
    schedules: dict
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        full = _merge(DEFAULTS, d)
        for sec in ("model", "grid", "newton", "schedules", "outputs"):
            extra = set(full[sec]) - set(DEFAULTS[sec])
            if extra:
                raise ConfigError(f"unknown keys in {sec}: {sorted(extra)}")
        sc = cls(str(full["name"]), full["model"], full["grid"], full["newton"], full["schedules"],
                 full["outputs"])
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        return asdict(self)

    # -- validation ------------------------------------------------------------

    def validate(self) -> None:
        m, g = self.model, self.grid
        try:
            beta, c, nu = float(m["beta"]), float(m["c"]), float(m["nu"])
            n, s_max, stretch = int(g["n"]), float(g["s_max"]), float(g["stretch"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric field: {exc}") from None
        if not (0.0 < beta <= 1.0):
            raise ConfigError(f"beta={beta} outside (0, 1]")
        if not np.isfinite(c):
            raise ConfigError("c must be finite")
        if not (0.0 <= nu < 1.0):
            raise ConfigError(f"nu={nu} outside [0, 1)")
        if n < 64:
            raise ConfigError(f"grid n={n} < 64")
        if not s_max > 0 or stretch < 0:
            raise ConfigError("s_max must be positive and stretch nonnegative")
        pts = m["divisor"]
        if isinstance(pts, str):
            pts = [p.strip() for p in pts.split(",")]
        pts = [str(p) for p in pts]
        if not pts or any(p not in ("0", "inf") for p in pts) or len(set(pts)) != len(pts):
            raise ConfigError(f"divisor must be a nonempty subset of [0, inf], got {m['divisor']}")
        m["divisor"] = sorted(pts, key=str)
        lam_expected = 1.0 if len(pts) == 2 else 0.5
        if m["lambda"] is None:
            m["lambda"] = lam_expected
        if abs(float(m["lambda"]) - lam_expected) > 1e-12:
            raise ConfigError(f"lambda={m['lambda']} does not match divisor {pts} (expected {lam_expected})")
        if m["twist"] not in ("none", "smooth", "conical"):
            raise ConfigError(f"twist must be none, smooth or conical, got {m['twist']!r}")
        if m["f_eta"] is not None:
            fe = m["f_eta"]
            if not isinstance(fe, dict) or fe.get("shape") not in F_ETA_SHAPES:
                raise ConfigError(f"f_eta needs shape in {F_ETA_SHAPES}")
        self.newton_settings()
        sch = self.schedules
        for key in ("t", "epsilons"):
            v = sch.get(key)
            if v is not None and len(v) == 0:
                raise ConfigError(f"empty {key} schedule")
        if sch.get("t") is not None:
            t = [float(x) for x in sch["t"]]
            if any(b <= a for a, b in zip(t, t[1:])) or t[0] <= 0 or t[-1] > 1:
                raise ConfigError("t schedule must increase within (0, 1]")
        if sch.get("epsilons") is not None:
            e = [float(x) for x in sch["epsilons"]]
            if any(b >= a for a, b in zip(e, e[1:])) or e[-1] <= 0:
                raise ConfigError("epsilons must be positive and decreasing")

    # -- builders ----------------------------------------------------------------

    def newton_settings(self) -> NewtonSettings:
        try:
            return NewtonSettings(**{k: (int(v) if k == "max_iters" else float(v))
                                     for k, v in self.newton.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def build_grid(self) -> Grid:
        return build_grid(int(self.grid["n"]), float(self.grid["s_max"]), float(self.grid["stretch"]))

    def f_eta(self, grid: Grid) -> Optional[np.ndarray]:
        fe = self.model["f_eta"]
        if fe is None:
            return None
        s = grid.nodes
        a = float(fe.get("amplitude", 0.3))
        if fe["shape"] == "density":
            f = a * (2.0 * fs_potential(grid).d2u - 1.0)
        elif fe["shape"] == "sech":
            f = a / np.cosh((s - float(fe.get("center", 0.0))) / float(fe.get("width", 1.0)))
        else:
            f = a * np.exp(-((s - float(fe.get("center", 0.0))) / float(fe.get("width", 1.0))) ** 2)
        return f - f.max()

    def twist(self, grid: Grid) -> Optional[TwistSpec]:
        beta = float(self.model["beta"])
        if self.model["twist"] == "none" or beta >= 1.0:
            return None
        return TwistSpec("smooth", beta, self.f_eta(grid)).check(grid)

    def divisor(self, grid: Grid):
        nu = float(self.model["nu"])
        if not nu > 0:
            raise ConfigError("conical runs need nu in (0, 1)")
        return divisor_weight(make_divisor(self.model["divisor"]), fs_potential(grid), nu)


def load_scenarios(path) -> List[Scenario]:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file is not valid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must hold a mapping")
    if "scenarios" in raw:
        base = raw.get("defaults", {}) or {}
        cells = raw["scenarios"]
        if not isinstance(cells, list) or not cells:
            raise ConfigError("scenarios must be a nonempty list")
        out = [Scenario.from_dict(_merge(base, cell)) for cell in cells]
        names = [s.name for s in out]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique (they name the output cells)")
        return out
    return [Scenario.from_dict(raw)]
