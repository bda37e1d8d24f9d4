"""Single-objective scalarizations of a multi-objective control problem.

Three modes: per-objective ideal-cost problems, the Chebyshev scalarization
in smooth goal-attainment form (minimize the attainment level alpha subject
to w_i (phi_i - beta_i*) <= alpha, alpha >= 0), and the weighted-sum
comparison.  Weighted sum is kept only to demonstrate its failure to reach
nonconvex front segments; the front optimizer never uses it.

Free-horizon handling: with the horizon fixed the transcribed NLPs solve
fast and reliably, while a free horizon adds a strongly coupled, weakly
determined direction.  Single-objective solves over a free horizon are
therefore run as a one-dimensional search over the fixed-horizon value
function (grid, feasibility-boundary bisection, golden-section refinement),
and goal-attainment solutions whose horizon-like objective row goes slack
(the solution drifted along a valley that is flat to discretization noise)
are snapped back onto the utopia ray by one fixed-horizon re-solve.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from chebfront.core import ControlProblem, FixedHorizon, FreeHorizon, ObjectiveVector, Trajectory, eval_objectives
from chebfront.nlp import NlpSolution, SolverOptions, SolverStatus, solve
from chebfront.transcription import (
    TranscriptionConfig,
    build_seed,
    estimate_adjoints,
    extract_trajectory,
    transcribe,
)

_WEIGHT_TOL = 1e-12
_GOLDEN_ITERS = 12
_GRID_POINTS = 5
_GRID_LO_FRAC = 0.35
_SNAP_SLACK_TOL = 1e-4
_HORIZON_PROBE_STEP = 0.1


class ScalarizationKind(Enum):
    GOAL_ATTAINMENT = "goal_attainment"
    WEIGHTED_SUM = "weighted_sum"
    SINGLE_OBJECTIVE = "single_objective"


@dataclass(frozen=True)
class ScalarizationSpec:
    kind: ScalarizationKind
    weights: np.ndarray  # (r,), sum 1, nonnegative
    utopia: Optional[np.ndarray] = None  # beta*, required for goal attainment
    offsets: Optional[np.ndarray] = None  # additive positivity offsets
    objective_index: Optional[int] = None  # for SINGLE_OBJECTIVE

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "weights", w)
        if np.any(w < -_WEIGHT_TOL):
            raise ValueError("weights must be nonnegative")
        if abs(float(np.sum(w)) - 1.0) > _WEIGHT_TOL:
            raise ValueError("weights must sum to one")
        if self.utopia is not None:
            object.__setattr__(self, "utopia", np.asarray(self.utopia, dtype=float).ravel())
        if self.offsets is not None:
            object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float).ravel())
        if self.kind is ScalarizationKind.GOAL_ATTAINMENT and self.utopia is None:
            raise ValueError("goal attainment requires a utopia vector")
        if self.kind is ScalarizationKind.SINGLE_OBJECTIVE and self.objective_index is None:
            raise ValueError("single-objective mode needs the objective index")


def bi_objective_weights(w: float) -> np.ndarray:
    """(w, 1-w) for the scalar weight parameterization of two objectives."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    return np.array([w, 1.0 - w])


def goal_attainment_spec(w: float, utopia, offsets=None) -> ScalarizationSpec:
    return ScalarizationSpec(
        kind=ScalarizationKind.GOAL_ATTAINMENT,
        weights=bi_objective_weights(w),
        utopia=utopia,
        offsets=offsets,
    )


@dataclass
class SolveResult:
    """One Pareto point: trajectories, objective values, attainment level,
    and adjoint estimates, plus the raw NLP solution for warm starting."""

    trajectory: Optional[Trajectory]
    objectives: ObjectiveVector
    alpha: Optional[float]
    adjoints: Optional[np.ndarray]  # (N+1, n)
    nlp_status: SolverStatus
    w_used: np.ndarray
    nlp: Optional[NlpSolution] = None
    n_nlp_solves: int = 1  # NLP solves spent on this logical solve

    @property
    def success(self) -> bool:
        return self.nlp_status is SolverStatus.SUCCESS


class ScalarizationError(RuntimeError):
    """NLP failure while solving a scalarized problem; carries the weights."""

    def __init__(self, message: str, weights: np.ndarray):
        super().__init__(message)
        self.weights = np.asarray(weights, dtype=float)


def utopia_vector(ideal: np.ndarray, eta=None, override=None) -> np.ndarray:
    """beta_i* = ideal_i - eta_i, or the override verbatim.

    Without eta, the default shift is 0.01 |ideal| + 0.01 per component.
    """
    if override is not None:
        return np.asarray(override, dtype=float).ravel()
    ideal = np.asarray(ideal, dtype=float).ravel()
    if eta is None:
        eta = 0.01 * np.abs(ideal) + 0.01
    eta = np.asarray(eta, dtype=float).ravel() * np.ones_like(ideal)
    if np.any(eta <= 0):
        raise ValueError("utopia shifts must be positive")
    return ideal - eta


def _offsets_of(problem: ControlProblem, spec: ScalarizationSpec) -> np.ndarray:
    if spec.offsets is None:
        return np.zeros(problem.r)
    return spec.offsets


def _warm_nlp(z: np.ndarray, eq_mult, ineq_mult) -> NlpSolution:
    return NlpSolution(
        z=z,
        eq_multipliers=np.asarray(eq_mult, dtype=float),
        ineq_multipliers=np.asarray(ineq_mult, dtype=float),
        status=SolverStatus.SUCCESS,
        kkt_residual=0.0,
        feas_violation=0.0,
        iterations=0,
        objective=0.0,
    )


def _direct_solve(
    problem: ControlProblem,
    spec: Optional[ScalarizationSpec],
    config: TranscriptionConfig,
    warm: Optional[SolveResult],
    options: SolverOptions,
    presolve: bool,
) -> SolveResult:
    """Transcribe and solve one NLP (spec None = feasibility problem)."""
    n_solves = 0
    nlp, layout = transcribe(problem, config, spec)
    z0 = build_seed(problem, config, layout, warm=warm.trajectory if warm else None)
    warm_start: NlpSolution | np.ndarray = z0

    if warm is not None and warm.nlp is not None:
        n_eq = layout.n_defect_rows + layout.n_boundary_eq
        if warm.nlp.eq_multipliers.size == n_eq:
            mi = nlp.ineq(z0).size if nlp.ineq is not None else 0
            ineq_mult = (
                warm.nlp.ineq_multipliers
                if warm.nlp.ineq_multipliers.size == mi
                else np.zeros(mi)
            )
            warm_start = _warm_nlp(z0, warm.nlp.eq_multipliers, ineq_mult)
    elif presolve:
        # phase I: land on the feasible manifold before chasing the objective
        nlp0, layout0 = transcribe(problem, config, None)
        z00 = build_seed(problem, config, layout0)
        sol0 = solve(nlp0, options, z00)
        n_solves += 1
        if sol0.feas_violation <= 1e3 * options.tol_feas:
            z0[: sol0.z.size] = sol0.z
            if layout.alpha_index is not None:
                traj0 = extract_trajectory(sol0, layout0)
                z0 = _reseed_alpha(problem, spec, layout, z0, traj0)
            mi = nlp.ineq(z0).size if nlp.ineq is not None else 0
            warm_start = _warm_nlp(z0, sol0.eq_multipliers, np.zeros(mi))

    solution = solve(nlp, options, warm_start)
    n_solves += 1
    if solution.status is SolverStatus.INFEASIBLE:
        raise ScalarizationError(
            f"scalarized solve infeasible at weights {spec.weights if spec else None}",
            spec.weights if spec else np.zeros(problem.r),
        )
    traj = extract_trajectory(solution, layout)
    try:
        adjoints = estimate_adjoints(solution, layout, config)
    except ValueError:
        adjoints = None
    return SolveResult(
        trajectory=traj,
        objectives=eval_objectives(problem, traj),
        alpha=layout.alpha_of(solution.z),
        adjoints=adjoints,
        nlp_status=solution.status,
        w_used=spec.weights.copy() if spec else np.zeros(problem.r),
        nlp=solution,
        n_nlp_solves=n_solves,
    )


def _reseed_alpha(problem, spec, layout, z0, traj) -> np.ndarray:
    offs = _offsets_of(problem, spec)
    phi = np.array(
        [float(f(traj.terminal_state, traj.t_f)) + offs[i] for i, f in enumerate(problem.objectives)]
    )
    z0 = z0.copy()
    z0[layout.alpha_index] = max(0.0, float(np.max(spec.weights * (phi - spec.utopia))))
    return z0


def _fixed_horizon_problem(problem: ControlProblem, t_f: float) -> ControlProblem:
    return dataclasses.replace(problem, horizon=FixedHorizon(t_f))


def _horizon_like(problem: ControlProblem, i: int, x_f: np.ndarray, t_f: float) -> bool:
    """Does objective i respond one-for-one to the horizon at fixed state?"""
    phi = problem.objectives[i]
    d = (float(phi(x_f, t_f + _HORIZON_PROBE_STEP)) - float(phi(x_f, t_f))) / _HORIZON_PROBE_STEP
    return abs(d - 1.0) <= 1e-9


def _snap_flat_horizon(
    problem: ControlProblem,
    spec: ScalarizationSpec,
    config: TranscriptionConfig,
    options: SolverOptions,
    result: SolveResult,
) -> SolveResult:
    """Re-anchor a goal-attainment solution whose horizon-like row is slack.

    Inside the essential interval both attainment rows are active at the true
    solution; at desk-scale meshes the discrete objective can be flat in the
    horizon, letting the solver park anywhere along the valley with one row
    slack.  When that row's objective is the horizon itself, the horizon on
    the utopia ray is available in closed form from alpha; one fixed-horizon
    re-solve lands exactly there (clamped to the horizon cap, which is the
    true geometry beyond the essential interval).
    """
    if result.alpha is None or result.trajectory is None:
        return result
    offs = _offsets_of(problem, spec)
    phi = result.objectives.values + offs
    rows = spec.weights * (phi - spec.utopia)
    slack = result.alpha - rows
    i = int(np.argmax(slack))
    if slack[i] <= _SNAP_SLACK_TOL * (1.0 + abs(result.alpha)) or spec.weights[i] <= 0:
        return result
    x_f = result.trajectory.terminal_state
    t_f0 = result.trajectory.t_f
    if not _horizon_like(problem, i, x_f, t_f0):
        return result
    # phi_i = t_f + const(x_f); put the row on the ray: w_i (phi_i - beta_i) = alpha
    const = float(problem.objectives[i](x_f, t_f0)) - t_f0 + offs[i]
    t_target = spec.utopia[i] + result.alpha / spec.weights[i] - const
    t_target = float(np.clip(t_target, 1e-2 * problem.horizon.t_f_max, problem.horizon.t_f_max))
    if abs(t_target - t_f0) <= 1e-4 * problem.horizon.t_f_max:
        return result
    fixed = _fixed_horizon_problem(problem, t_target)
    snapped = _direct_solve(fixed, spec, config, result, options, presolve=False)
    snapped.n_nlp_solves += result.n_nlp_solves
    return snapped


class _HorizonSearch:
    """Shared bookkeeping for fixed-horizon sub-solves of a free-horizon
    single-objective problem (cache, warm chaining, solve counting)."""

    def __init__(self, problem, spec, config, options):
        self.problem = problem
        self.spec = spec
        self.config = config
        self.options = options
        self.n_solves = 0
        self.results: dict[float, Optional[SolveResult]] = {}

    def solve_at(self, t_f: float, warm_r: Optional[SolveResult]) -> Optional[SolveResult]:
        key = round(float(t_f), 12)
        if key in self.results:
            return self.results[key]
        fixed = _fixed_horizon_problem(self.problem, float(t_f))
        try:
            r = _direct_solve(fixed, self.spec, self.config, warm_r, self.options, presolve=warm_r is None)
        except ScalarizationError:
            r = None
        if r is not None:
            self.n_solves += r.n_nlp_solves
            if r.nlp.feas_violation > 1e3 * self.options.tol_feas:
                r = None
        else:
            self.n_solves += 1
        self.results[key] = r
        return r


def _single_over_free_horizon(
    problem: ControlProblem,
    spec: ScalarizationSpec,
    config: TranscriptionConfig,
    options: SolverOptions,
    warm: Optional[SolveResult],
) -> SolveResult:
    """Minimize one objective when the horizon is free: one-dimensional
    search over the fixed-horizon value function.

    A horizon-like objective (bi-objective case) means minimal feasible
    horizon: bisect the feasibility boundary using the lexicographic
    fixed-horizon solve (minimize the other objective) as the oracle, so the
    reported point is the nondominated corner of the front.  Otherwise,
    evaluate a horizon grid right-to-left with warm chaining and refine the
    minimum by golden section.  Robust because every inner solve has a fixed
    horizon.
    """
    t_max = problem.horizon.t_f_max
    idx = spec.objective_index
    tol_t = 5e-4 * t_max
    probe_x = problem.initial_state if problem.initial_state is not None else np.zeros(problem.n)

    if problem.r == 2 and _horizon_like(problem, idx, probe_x, t_max):
        lex = ScalarizationSpec(
            kind=ScalarizationKind.SINGLE_OBJECTIVE,
            weights=np.eye(2)[1 - idx],
            objective_index=1 - idx,
            offsets=spec.offsets,
        )
        search = _HorizonSearch(problem, lex, config, options)
        grid = np.linspace(_GRID_LO_FRAC * t_max, t_max, _GRID_POINTS)
        chain = warm
        feasible: list[tuple[float, SolveResult]] = []
        infeasible_hi = None
        for t_f in reversed(grid):
            r = search.solve_at(t_f, chain)
            if r is None:
                infeasible_hi = float(t_f)
                break  # horizons further left are shorter still
            chain = r
            feasible.append((float(t_f), r))
        if not feasible:
            raise ScalarizationError("no feasible horizon found", spec.weights)
        b, r_b = feasible[-1]
        a = infeasible_hi if infeasible_hi is not None else 0.0
        while b - a > tol_t:
            mid = 0.5 * (a + b)
            r = search.solve_at(mid, r_b)
            if r is None:
                a = mid
            else:
                b, r_b = mid, r
        r_b.n_nlp_solves = search.n_solves
        return r_b

    search = _HorizonSearch(problem, spec, config, options)

    def value(r: Optional[SolveResult]) -> float:
        return float(r.objectives[idx]) if r is not None else np.inf

    grid = np.linspace(_GRID_LO_FRAC * t_max, t_max, _GRID_POINTS)
    chain = warm
    vals = np.full(grid.size, np.inf)
    for pos in range(grid.size - 1, -1, -1):
        r = search.solve_at(grid[pos], chain)
        if r is None:
            break  # treat everything further left as infeasible
        chain = r
        vals[pos] = value(r)
    if not np.any(np.isfinite(vals)):
        raise ScalarizationError(
            f"no feasible horizon found for single-objective solve {idx + 1}", spec.weights
        )
    j = int(np.argmin(vals))
    best = search.results[round(float(grid[j]), 12)]
    lo = float(grid[j - 1]) if j > 0 and np.isfinite(vals[j - 1]) else float(grid[j])
    hi = float(grid[j + 1]) if j + 1 < grid.size else float(grid[-1])

    golden = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    best_r = best
    c = b - golden * (b - a)
    d = a + golden * (b - a)
    rc, rd = search.solve_at(c, best_r), search.solve_at(d, best_r)
    for _ in range(_GOLDEN_ITERS):
        if value(rc) < value(rd):
            b, d, rd = d, c, rc
            c = b - golden * (b - a)
            rc = search.solve_at(c, best_r)
        else:
            a, c, rc = c, d, rd
            d = a + golden * (b - a)
            rd = search.solve_at(d, best_r)
        for r in (rc, rd):
            if value(r) < value(best_r):
                best_r = r
    if best_r is None:
        raise ScalarizationError("free-horizon search failed", spec.weights)
    best_r.n_nlp_solves = search.n_solves
    return best_r


def solve_scalarized(
    problem: ControlProblem,
    spec: ScalarizationSpec,
    config: TranscriptionConfig,
    warm: Optional[SolveResult] = None,
    options: Optional[SolverOptions] = None,
    presolve: bool = True,
) -> SolveResult:
    """Solve one scalarization of the problem.

    Goal attainment minimizes the attainment level subject to the weighted
    deviation rows; the seed level is the worst weighted deviation of the
    seed trajectory so the rows start feasible.  Warm starts map node-wise
    into the NLP seed.  ``presolve`` enables the phase-I feasibility solve
    for cold starts (ignored when a warm start is available).
    """
    options = options or SolverOptions()
    free = isinstance(problem.horizon, FreeHorizon)
    if spec.kind is ScalarizationKind.SINGLE_OBJECTIVE and free:
        return _single_over_free_horizon(problem, spec, config, options, warm)
    result = _direct_solve(problem, spec, config, warm, options, presolve=presolve)
    if spec.kind is ScalarizationKind.GOAL_ATTAINMENT and free:
        result = _snap_flat_horizon(problem, spec, config, options, result)
    return result


def ideal_costs(
    problem: ControlProblem,
    config: TranscriptionConfig,
    i: int,
    options: Optional[SolverOptions] = None,
    warm: Optional[SolveResult] = None,
) -> tuple[float, ObjectiveVector, SolveResult]:
    """Minimize objective i alone over the feasible set.

    Returns (ideal value phi_i*, the full objective vector at that minimizer,
    and the underlying solve for warm-starting).  ``i`` is 1-based.
    """
    if not 1 <= i <= problem.r:
        raise ValueError(f"objective index must be in 1..{problem.r}")
    weights = np.zeros(problem.r)
    weights[i - 1] = 1.0
    spec = ScalarizationSpec(
        kind=ScalarizationKind.SINGLE_OBJECTIVE, weights=weights, objective_index=i - 1
    )
    result = solve_scalarized(problem, spec, config, warm=warm, options=options)
    return result.objectives[i - 1], result.objectives, result


class ScalarizedOcpSolver:
    """Lower-level interface over (problem, transcription, NLP solver).

    The front module talks to this one method surface; analytic toy problems
    implement the same surface without any transcription behind it.
    """

    def __init__(
        self,
        problem: ControlProblem,
        config: TranscriptionConfig,
        options: Optional[SolverOptions] = None,
    ):
        self.problem = problem
        self.config = config
        self.options = options or SolverOptions()

    @property
    def r(self) -> int:
        return self.problem.r

    def solve(self, spec: ScalarizationSpec, warm: Optional[SolveResult] = None) -> SolveResult:
        return solve_scalarized(self.problem, spec, self.config, warm=warm, options=self.options)
