"""The data of one twisted soliton equation

    Ric(omega) = beta omega + eta + L_X omega

relative to a base metric: the base potential, beta, the twist, X = c z d/dz
and the base Ricci potential h0 (Ric(omega0) - beta omega0 - eta = i ddbar h0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import (RadialPotential, VectorFieldSpec, ricci_potential, theta_shift,
                       theta_shift_derivative, fs_potential, Grid)
from .twist import TwistSpec


@dataclass(frozen=True, eq=False)
class Setting:
    base: RadialPotential
    beta: float
    c: float = 0.0
    twist: Optional[TwistSpec] = None
    h0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.h0 is None:
            object.__setattr__(self, "h0", ricci_potential(self.base, self.beta, self.twist))

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def X(self) -> VectorFieldSpec:
        return VectorFieldSpec(self.c)

    def with_c(self, c: float) -> "Setting":
        return Setting(self.base, self.beta, float(c), self.twist, self.h0)

    def theta0(self, c=None) -> np.ndarray:
        c = self.c if c is None else c
        return c * self.base.du + theta_shift(c)

    @cached_property
    def dh0(self) -> np.ndarray:
        return self.grid.d1(self.h0)

    @cached_property
    def dlogb(self) -> np.ndarray:
        """(log u_b'' + h0)' used by the tail boundary conditions."""
        return self.grid.d1(np.log(self.base.d2u) + self.h0)

    @cached_property
    def d2logb(self) -> np.ndarray:
        return self.grid.d2(np.log(self.base.d2u) + self.h0)

    @property
    def strictly_positive_twist(self) -> bool:
        if self.twist is None or self.twist.kind == "none":
            return False
        if self.twist.kind == "smooth":
            return self.twist.beta < 1.0 and np.max(self.twist.density(self.grid)) > 0
        return True


def fs_setting(grid: Grid, beta: float, c: float = 0.0, twist: Optional[TwistSpec] = None) -> Setting:
    """Base omega0 = Fubini-Study; default twist eta = (1-beta) omega0."""
    if twist is None and beta < 1.0:
        twist = TwistSpec("smooth", beta)
    return Setting(fs_potential(grid), float(beta), float(c), twist)
