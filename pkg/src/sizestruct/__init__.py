"""Hierarchical size-structured population model with distributed birth delay.

Steady states, reproduction numbers, the characteristic equation of the
linearisation, stability verdicts and a nonlinear upwind simulator.
"""
from ._jit import USE_NUMBA
from .equilibrium import (
    EquilibriumSolution,
    RateSet,
    equilibrium_density,
    hierarchy_weight,
    reproduction_number,
    solve_equilibrium,
    survivorship_profile,
    trivial_equilibrium,
)
from .numerics import DelayGrid, SizeGrid
from .ratedsl import diff_expr, eval_expr, parse_expr
from .spectrum import (
    CharacteristicFunction,
    StabilityVerdict,
    char_det,
    char_matrix,
    classify,
    leading_root,
    linear_coefficients,
    pi_star,
    positivity_check,
)

__version__ = "0.1.0"
