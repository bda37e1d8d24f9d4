"""Built-in problem definitions and analytic toy lower levels."""

from chebfront.problems.rayleigh import rayleigh
from chebfront.problems.toys import AnalyticScalarizedSolver, toy_static
from chebfront.problems.tuberculosis import TbParams, calibrate_beta, tuberculosis

__all__ = [
    "AnalyticScalarizedSolver",
    "TbParams",
    "calibrate_beta",
    "rayleigh",
    "toy_static",
    "tuberculosis",
]
