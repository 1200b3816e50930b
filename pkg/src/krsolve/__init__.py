"""Numerical lab for twisted and conical Kähler-Ricci solitons on the
S^1-symmetric Riemann sphere."""

from .geometry import (Grid, RadialPotential, VectorFieldSpec, DivisorModel, build_grid,
                       fs_potential, theta_potential, ricci_density, ricci_potential,
                       divisor_weight, integrate, meridian_metrics, VOLUME)
from .problem import Setting, fs_setting
from .twist import TwistSpec
from .errors import KRSolveError, ConfigError, NumericalError
from .functionals import aubin_yau, k_energy_twisted, ding_twisted, energy_report
from .solver import (NewtonSettings, newton_solve, continuity_path, flow_smooth, r_invariant,
                     r_invariant_exact)
from .conical import solve_conical, default_epsilons
from .invariants import lambda1, alpha_lower_bound, cone_window, mt_fit, convergence_diagnostics

__version__ = "0.1.0"
