"""hp-adaptive finite element solver for a strain-limiting edge-crack
benchmark on the unit square."""

from .constitutive import (FluxCoefficients, ModelParams, StressStrain,
                           dpsi1, flux_coeffs, psi1, strain_bound, stress_strain)
from .hp_space import (BoundaryValues, ConstraintSet, DofHandler, HpSpace,
                       QuadratureRule, build_constraints, build_space,
                       crack_boundary_values, distribute_dofs, evaluate,
                       gauss_rule, shape_eval)
from .mesh import Cell, FaceRef, QuadMesh, create_initial, locate, neighbors, refine
from .solver import (LinearSolveError, NewtonConfig, NewtonError, NewtonLog,
                     line_search, newton_solve, solve_linear)

__version__ = "0.1.0"

__all__ = [
    "BoundaryValues", "Cell", "ConstraintSet", "DofHandler", "FaceRef",
    "FluxCoefficients", "HpSpace", "LinearSolveError", "ModelParams",
    "NewtonConfig", "NewtonError", "NewtonLog", "QuadMesh", "QuadratureRule",
    "StressStrain", "build_constraints", "build_space", "crack_boundary_values",
    "create_initial", "distribute_dofs", "dpsi1", "evaluate", "flux_coeffs",
    "gauss_rule", "line_search", "locate", "neighbors", "newton_solve",
    "psi1", "refine", "shape_eval", "solve_linear", "strain_bound",
    "stress_strain",
]
