"""Multi-objective optimal control with optimization over the Pareto front.

The library solves nonconvex bi-objective (and, for scalarization, general
r-objective) optimal control problems, possibly with state and control time
delays, by Chebyshev goal-attainment scalarization and direct collocation,
and then minimizes a scalar master objective over the Pareto front with a
derivative-sign bisection on the scalarization weight.
"""

from chebfront.core import (
    ControlProblem,
    EvaluationError,
    FixedHorizon,
    FreeHorizon,
    ObjectiveVector,
    Trajectory,
    eval_dynamics,
    eval_objectives,
)
from chebfront.front import (
    BisectionReport,
    EndpointCase,
    FrontPoint,
    MasterObjective,
    Termination,
    essential_interval,
    optimize_over_front,
    sweep_front,
)
from chebfront.nlp import NlpProblem, NlpSolution, SolverOptions, SolverStatus, kkt_check, solve
from chebfront.scalarize import (
    ScalarizationKind,
    ScalarizationSpec,
    ScalarizedOcpSolver,
    SolveResult,
    ideal_costs,
    solve_scalarized,
    utopia_vector,
)
from chebfront.transcription import (
    ConfigurationError,
    NlpLayout,
    Scheme,
    TranscriptionConfig,
    estimate_adjoints,
    extract_trajectory,
    transcribe,
)

__version__ = "0.1.0"

__all__ = [
    "BisectionReport",
    "ConfigurationError",
    "ControlProblem",
    "EndpointCase",
    "EvaluationError",
    "FixedHorizon",
    "FreeHorizon",
    "FrontPoint",
    "MasterObjective",
    "NlpLayout",
    "NlpProblem",
    "NlpSolution",
    "ObjectiveVector",
    "ScalarizationKind",
    "ScalarizationSpec",
    "ScalarizedOcpSolver",
    "Scheme",
    "SolveResult",
    "SolverOptions",
    "SolverStatus",
    "Termination",
    "Trajectory",
    "TranscriptionConfig",
    "essential_interval",
    "estimate_adjoints",
    "eval_dynamics",
    "eval_objectives",
    "extract_trajectory",
    "ideal_costs",
    "kkt_check",
    "optimize_over_front",
    "solve",
    "solve_scalarized",
    "sweep_front",
    "transcribe",
    "utopia_vector",
]
