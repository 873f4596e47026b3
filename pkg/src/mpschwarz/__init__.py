"""Multiprecision algebraic Schwarz methods.

Subdomain problems are rescaled into the range of a reduced floating-point
format, rounded with structure-preserving rules and solved; the package
provides the four classical Schwarz iterations built on such solves, checks
of the sufficient convergence conditions, a GMRES accelerator, perturbation
analysis and an experiment harness.
"""

__version__ = "0.1.0"

from .fpsim import FloatFormat, RoundMode, get_format, round_array, round_matrix, round_scalar
from .pde import GridSpec, discretize, get_problem, make_rhs_and_init
from .decomp import Partition, strip_partition, two_domain_partition
from .rounding import RoundingKind, round_diag, round_mmatrix, round_plain
from .scaling import ScalingData, scale_general, scale_symmetric
from .schwarz import (SchwarzConfig, SolveMode, Variant, apply_preconditioner,
                      assemble_dense_iteration_matrix, build_operator, iterate, sweep)
from .conditions import check_operator
from .gmres import GmresConfig, gmres_solve

__all__ = [
    "FloatFormat", "RoundMode", "get_format", "round_array", "round_matrix", "round_scalar",
    "GridSpec", "discretize", "get_problem", "make_rhs_and_init",
    "Partition", "strip_partition", "two_domain_partition",
    "RoundingKind", "round_diag", "round_mmatrix", "round_plain",
    "ScalingData", "scale_general", "scale_symmetric",
    "SchwarzConfig", "SolveMode", "Variant", "apply_preconditioner",
    "assemble_dense_iteration_matrix", "build_operator", "iterate", "sweep",
    "check_operator", "GmresConfig", "gmres_solve",
]
