"""Numerical laboratory for modified logarithmic Sobolev inequalities."""

from .convex_core import (GridFunction, Potential, attach_numeric_conjugate, bregman_cost,
                          conjugate_nd, discrete_legendre_1d, ensure_conjugate,
                          make_builtin_potential)
from .functionals import TestFunction, entropy, entropy_dual_gap, mlsi_integrand, variance
from .inequalities import DeficitReport, LargeEntropyConstants
from .quadrature import Box, QuadratureRule, scenario_rule, tensor_rule

__version__ = "0.1.0"

__all__ = [
    "Box",
    "DeficitReport",
    "GridFunction",
    "LargeEntropyConstants",
    "Potential",
    "QuadratureRule",
    "TestFunction",
    "attach_numeric_conjugate",
    "bregman_cost",
    "conjugate_nd",
    "discrete_legendre_1d",
    "ensure_conjugate",
    "entropy",
    "entropy_dual_gap",
    "make_builtin_potential",
    "mlsi_integrand",
    "scenario_rule",
    "tensor_rule",
    "variance",
]
