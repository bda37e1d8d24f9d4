"""Optimization over the Pareto front of a bi-objective problem.

The master objective F(w) is the decision maker's scalar criterion evaluated
at the Chebyshev/goal-attainment solution for weight pair (w, 1-w).  The
optimizer (i) solves the two single-objective boundary problems, (ii) forms
the utopia point, (iii) restricts the search to the essential interval of
weights outside which only boundary points are generated, (iv) classifies the
endpoint derivative signs, and (v) bisects on the sign of the one-sided
finite-difference derivative of F.

Every F evaluation is cached by weight and warm-started from the nearest
cached solve; the two evaluations inside a derivative may run concurrently
on independent solver instances.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from chebfront.scalarize import (
    ScalarizationKind,
    ScalarizationSpec,
    SolveResult,
    goal_attainment_spec,
    utopia_vector,
)


class DegenerateFrontError(ValueError):
    """Boundary points coincide; the essential interval is empty."""


class FrontEvaluationError(RuntimeError):
    """Lower-level solve failed during an F evaluation; carries the weight."""

    def __init__(self, w: float, cause: Exception):
        super().__init__(f"F evaluation failed at w={w}: {cause}")
        self.w = w
        self.cause = cause


class EndpointCase(Enum):
    I = "I"
    II = "II"
    III = "III"


class Termination(Enum):
    DERIVATIVE_ZERO = "derivative_zero"
    INTERVAL_TOL = "interval_tol"
    MAX_ITER = "max_iter"
    ENDPOINT_MINIMIZER = "endpoint_minimizer"
    FAILED = "failed"


MSG_FAILED = "Algorithm failed. Change the interval [w0,wf]."
MSG_MAX_ITER = "Maximum number of iterations exceeded."


@dataclass(frozen=True)
class MasterObjective:
    """Scalar criterion over a solved Pareto point.

    Either a weighted squared norm sum(c_i * phi_i^2) of the objective values
    (with optional square-root reporting, the usual 'distance to the origin'
    presentation) or an arbitrary callable over the SolveResult.
    """

    coefficients: Optional[np.ndarray] = None
    custom: Optional[Callable[[SolveResult], float]] = None
    report_sqrt: bool = False

    def __post_init__(self) -> None:
        if (self.coefficients is None) == (self.custom is None):
            raise ValueError("exactly one of coefficients/custom must be given")
        if self.coefficients is not None:
            c = np.asarray(self.coefficients, dtype=float).ravel()
            object.__setattr__(self, "coefficients", c)
            if np.any(c < 0) or not np.any(c > 0):
                raise ValueError("coefficients must be nonnegative and not all zero")

    @staticmethod
    def weighted_squared_norm(coefficients, report_sqrt: bool = True) -> "MasterObjective":
        return MasterObjective(coefficients=np.asarray(coefficients, dtype=float), report_sqrt=report_sqrt)

    def evaluate(self, result: SolveResult) -> float:
        if self.custom is not None:
            return float(self.custom(result))
        phi = result.objectives.values
        return float(self.coefficients @ (phi * phi))

    def display_value(self, raw: float) -> float:
        return math.sqrt(raw) if self.report_sqrt else raw


@dataclass
class FrontPoint:
    w: float
    objectives: np.ndarray  # (2,)
    master_raw: float
    master_sqrt: float
    status: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("weight must lie in [0, 1]")


@dataclass
class BisectionIteration:
    k: int
    a: float
    b: float
    c: float
    f_prime_c: float


@dataclass
class BisectionReport:
    essential_interval: tuple[float, float]
    boundary_points: tuple[tuple[float, float], tuple[float, float]]
    utopia: np.ndarray
    endpoint_case: Optional[EndpointCase]
    f_prime_w0: float
    f_prime_wf: float
    iterations: list[BisectionIteration]
    w_star: Optional[float]
    master_at_star: Optional[float]
    master_sqrt_at_star: Optional[float]
    objectives_at_star: Optional[np.ndarray]
    termination: Termination
    message: str
    n_ideal_solves: int
    n_scalarized_solves: int
    n_nlp_solves: int = 0  # NLP invocations inside the logical solves
    evaluated_points: list[FrontPoint] = None

    @property
    def total_solves(self) -> int:
        return self.n_ideal_solves + self.n_scalarized_solves


@dataclass(frozen=True)
class FrontOptions:
    eta: Optional[np.ndarray] = None  # utopia shifts (per objective)
    utopia_override: Optional[np.ndarray] = None
    delta: float = 1e-3  # finite-difference step in w
    eps: float = 5e-5  # half-interval stopping tolerance
    k_max: int = 30
    zero_tol: float = 1e-3  # |F'| < zero_tol*(1+|F|) counts as zero
    offsets: Optional[np.ndarray] = None  # objective positivity offsets
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.eps <= 0 or self.k_max < 1 or self.zero_tol <= 0:
            raise ValueError("delta, eps, zero_tol must be positive and k_max >= 1")


def essential_interval(
    boundary: tuple[tuple[float, float], tuple[float, float]], utopia
) -> tuple[float, float]:
    """Weight subinterval [w0, wf] outside which scalarizations reproduce the
    boundary points.  ``boundary`` is ((phi1*, phi2_bar), (phi1_bar, phi2*)).
    """
    (phi1_star, phi2_bar), (phi1_bar, phi2_star) = boundary
    beta = np.asarray(utopia, dtype=float).ravel()
    gaps = (
        phi1_star - beta[0],
        phi2_bar - beta[1],
        phi1_bar - beta[0],
        phi2_star - beta[1],
    )
    if min(gaps) <= 0:
        raise DegenerateFrontError(
            "utopia point must lie strictly below both boundary objective pairs"
        )
    w0 = (phi2_star - beta[1]) / ((phi1_bar - beta[0]) + (phi2_star - beta[1]))
    wf = (phi2_bar - beta[1]) / ((phi1_star - beta[0]) + (phi2_bar - beta[1]))
    if not 0.0 < w0 < wf < 1.0:
        raise DegenerateFrontError(
            f"degenerate essential interval [{w0:.6g}, {wf:.6g}]; "
            "boundary points coincide within tolerance"
        )
    return float(w0), float(wf)


class FrontContext:
    """F-evaluation cache and solve counters over a lower-level solver.

    The solver object needs a single method ``solve(spec, warm) -> SolveResult``
    and attribute ``r == 2``; both the transcription-backed solver and the
    analytic toys provide it.
    """

    def __init__(
        self,
        solver,
        master: MasterObjective,
        utopia,
        offsets=None,
        parallel: bool = False,
    ):
        if getattr(solver, "r", 2) != 2:
            raise ValueError("front optimization is bi-objective (r = 2)")
        self.solver = solver
        self.master = master
        self.utopia = np.asarray(utopia, dtype=float).ravel()
        self.offsets = offsets
        self.parallel = parallel
        self.cache: dict[float, tuple[float, SolveResult]] = {}
        self.n_scalarized_solves = 0
        self.n_ideal_solves = 0

    # -- warm starting -----------------------------------------------------
    def _nearest(self, w: float) -> Optional[SolveResult]:
        if not self.cache:
            return None
        key = min(self.cache, key=lambda u: (abs(u - w), u))
        return self.cache[key][1]

    def seed_boundary(self, w_key: float, result: SolveResult) -> None:
        """Install a boundary solve as a cache entry (it is the F value for
        every weight on its side of the essential interval)."""
        self.cache[w_key] = (self.master.evaluate(result), result)

    # -- F -------------------------------------------------------------
    def eval_F(self, w: float) -> tuple[float, SolveResult]:
        if not 0.0 <= w <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        if w in self.cache:
            return self.cache[w]
        spec = goal_attainment_spec(w, self.utopia, self.offsets)
        warm = self._nearest(w)
        try:
            result = self.solver.solve(spec, warm)
        except Exception as exc:  # noqa: BLE001 - converted to a typed failure
            raise FrontEvaluationError(w, exc) from exc
        self.n_scalarized_solves += 1
        value = self.master.evaluate(result)
        self.cache[w] = (value, result)
        return value, result

    def _eval_pair(self, w_lo: float, w_hi: float) -> tuple[float, float]:
        if self.parallel and w_lo not in self.cache and w_hi not in self.cache:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fut_lo = pool.submit(self.eval_F, w_lo)
                fut_hi = pool.submit(self.eval_F, w_hi)
                return fut_lo.result()[0], fut_hi.result()[0]
        return self.eval_F(w_lo)[0], self.eval_F(w_hi)[0]

    def fd_derivative(self, w: float, delta: float, interval: tuple[float, float]) -> float:
        """One-sided difference quotient of F: forward on [w0, wf-delta),
        backward on [wf-delta, wf]."""
        w0, wf = interval
        if w < wf - delta:
            f_w, f_up = self._eval_pair(w, w + delta)
            return (f_up - f_w) / delta
        f_dn, f_w = self._eval_pair(w - delta, w)
        return (f_w - f_dn) / delta

    def zero_threshold(self, w: float, zero_tol: float) -> float:
        f_w = self.cache[w][0] if w in self.cache else self.eval_F(w)[0]
        return zero_tol * (1.0 + abs(f_w))


def eval_F(w: float, context: FrontContext) -> tuple[float, SolveResult]:
    return context.eval_F(w)


def fd_derivative(
    w: float, delta: float, interval: tuple[float, float], context: FrontContext
) -> float:
    return context.fd_derivative(w, delta, interval)


@dataclass
class EndpointClassification:
    case: EndpointCase
    minimizer: Optional[float]
    failed: bool
    message: str


def classify_endpoints(
    f_prime_w0: float,
    f_prime_wf: float,
    *,
    tol_w0: float = 0.0,
    tol_wf: float = 0.0,
    interval: Optional[tuple[float, float]] = None,
    probe: Optional[Callable[[float], float]] = None,
    probe_eps: float = 1e-3,
) -> EndpointClassification:
    """Endpoint-sign cases for the essential interval.

    Case I (opposite nonzero signs): bisect.  Case II (same nonzero sign):
    an endpoint is a strict local minimizer (w0 when F'(w0) > 0, wf when
    F'(wf) < 0).  Case III (a derivative at zero within threshold): probe
    just inside the interval; if the probes are inconclusive the verdict is
    failure with advice to change the interval.
    """
    zero0 = abs(f_prime_w0) <= tol_w0
    zerof = abs(f_prime_wf) <= tol_wf
    if zero0 or zerof:
        case = EndpointCase.III
        if probe is not None and interval is not None:
            w0, wf = interval
            if zero0 and probe(w0 + probe_eps) > 0:
                return EndpointClassification(case, w0, False, "flat-then-increasing at w0")
            if zerof and probe(wf - probe_eps) < 0:
                return EndpointClassification(case, wf, False, "decreasing-then-flat at wf")
        return EndpointClassification(case, None, True, MSG_FAILED)
    if f_prime_w0 > 0 or f_prime_wf < 0:
        case = EndpointCase.II if f_prime_w0 * f_prime_wf > 0 else EndpointCase.I
        minimizer = None
        if f_prime_w0 > 0:
            minimizer = interval[0] if interval is not None else 0.0
        if f_prime_wf < 0 and minimizer is None:
            minimizer = interval[1] if interval is not None else 1.0
        return EndpointClassification(case, minimizer, False, "endpoint minimizer")
    return EndpointClassification(EndpointCase.I, None, False, "sign change; bisect")


def optimize_over_front(
    solver,
    master: MasterObjective,
    options: Optional[FrontOptions] = None,
) -> BisectionReport:
    """Bisection over the essential interval of weights.

    Runs the complete workflow: two single-objective boundary solves, utopia
    point, essential interval, endpoint classification with early endpoint
    exits, then the derivative-sign bisection until the derivative vanishes
    (within threshold), the half-interval drops below eps, or k_max is hit.
    """
    options = options or FrontOptions()
    r = getattr(solver, "r", 2)
    if r != 2:
        raise ValueError("front optimization is bi-objective (r = 2)")

    # boundary points of the front (ideal-cost solves)
    res1 = solver.solve(
        ScalarizationSpec(
            kind=ScalarizationKind.SINGLE_OBJECTIVE,
            weights=np.array([1.0, 0.0]),
            objective_index=0,
            offsets=options.offsets,
        ),
        None,
    )
    res2 = solver.solve(
        ScalarizationSpec(
            kind=ScalarizationKind.SINGLE_OBJECTIVE,
            weights=np.array([0.0, 1.0]),
            objective_index=1,
            offsets=options.offsets,
        ),
        res1,
    )
    pair1 = (res1.objectives[0], res1.objectives[1])  # (phi1*, phi2_bar)
    pair2 = (res2.objectives[0], res2.objectives[1])  # (phi1_bar, phi2*)

    offs = np.zeros(2) if options.offsets is None else np.asarray(options.offsets, dtype=float)
    ideal = np.array([pair1[0] + offs[0], pair2[1] + offs[1]])
    utopia = (
        np.asarray(options.utopia_override, dtype=float)
        if options.utopia_override is not None
        else utopia_vector(ideal, eta=options.eta)
    )
    shifted1 = (pair1[0] + offs[0], pair1[1] + offs[1])
    shifted2 = (pair2[0] + offs[0], pair2[1] + offs[1])
    w0, wf = essential_interval((shifted1, shifted2), utopia)

    ctx = FrontContext(
        solver, master, utopia, offsets=options.offsets, parallel=options.parallel
    )
    ctx.n_ideal_solves = 2
    ctx.seed_boundary(0.0, res2)
    ctx.seed_boundary(1.0, res1)

    interval = (w0, wf)
    fp0 = ctx.fd_derivative(w0, options.delta, interval)
    fpf = ctx.fd_derivative(wf, options.delta, interval)

    def finish(w_star, case, iters, termination, message) -> BisectionReport:
        master_raw = master_sqrt = objectives = None
        if w_star is not None:
            value, result = ctx.eval_F(w_star)
            master_raw = value
            master_sqrt = math.sqrt(value) if value >= 0 else float("nan")
            objectives = result.objectives.values.copy()
        evaluated = [
            FrontPoint(
                w=w,
                objectives=res.objectives.values.copy(),
                master_raw=val,
                master_sqrt=math.sqrt(val) if val >= 0 else float("nan"),
                status=res.nlp_status.value,
            )
            for w, (val, res) in sorted(ctx.cache.items())
        ]
        # the boundary solves are seeded into the cache, so this sum covers them
        n_nlp = sum(getattr(res, "n_nlp_solves", 1) for _, res in ctx.cache.values())
        return BisectionReport(
            essential_interval=(w0, wf),
            boundary_points=(pair1, pair2),
            utopia=utopia,
            endpoint_case=case,
            f_prime_w0=fp0,
            f_prime_wf=fpf,
            iterations=iters,
            w_star=w_star,
            master_at_star=master_raw,
            master_sqrt_at_star=master_sqrt,
            objectives_at_star=objectives,
            termination=termination,
            message=message,
            n_ideal_solves=ctx.n_ideal_solves,
            n_scalarized_solves=ctx.n_scalarized_solves,
            n_nlp_solves=n_nlp,
            evaluated_points=evaluated,
        )

    classification = classify_endpoints(
        fp0,
        fpf,
        tol_w0=ctx.zero_threshold(w0, options.zero_tol),
        tol_wf=ctx.zero_threshold(wf, options.zero_tol),
        interval=interval,
        probe=lambda w: ctx.fd_derivative(w, options.delta, interval),
        probe_eps=options.delta,
    )
    if classification.failed:
        return finish(None, classification.case, [], Termination.FAILED, MSG_FAILED)
    if classification.minimizer is not None:
        return finish(
            classification.minimizer,
            classification.case,
            [],
            Termination.ENDPOINT_MINIMIZER,
            classification.message,
        )

    # bisection on the derivative sign
    a, b = w0, wf
    fpa = fp0
    iters: list[BisectionIteration] = []
    k = 0
    while True:
        k += 1
        c = a + (b - a) / 2.0
        fpc = ctx.fd_derivative(c, options.delta, interval)
        iters.append(BisectionIteration(k=k, a=a, b=b, c=c, f_prime_c=fpc))
        if (b - a) / 2.0 < options.eps:
            return finish(c, classification.case, iters, Termination.INTERVAL_TOL, "half-interval below tolerance")
        if abs(fpc) <= ctx.zero_threshold(c, options.zero_tol):
            # vanishing derivative: verify the minimizer sign pattern with
            # expanding probes (the stationary point may be a local maximum
            # or an interior plateau of F, e.g. across a front gap)
            verdict, go_right, slope = _confirm_minimum(ctx, c, a, b, options)
            if verdict:
                return finish(
                    c, classification.case, iters, Termination.DERIVATIVE_ZERO,
                    "derivative within zero threshold",
                )
            if go_right:
                a, fpa = c, slope
            else:
                b = c
            if k == options.k_max:
                return finish(c, classification.case, iters, Termination.MAX_ITER, MSG_MAX_ITER)
            continue
        if k == options.k_max:
            return finish(c, classification.case, iters, Termination.MAX_ITER, MSG_MAX_ITER)
        if fpa * fpc > 0:
            a, fpa = c, fpc
        else:
            b = c


def _confirm_minimum(ctx: FrontContext, c: float, a: float, b: float, options: FrontOptions):
    """At a vanishing-derivative midpoint, decide minimum vs escape.

    Probes F at geometrically widening spans until the values separate from
    F(c) beyond noise.  Returns (is_minimum, continue_right, slope_estimate).
    """
    f_c = ctx.eval_F(c)[0]
    noise = 1e-9 * (1.0 + abs(f_c))
    span = options.delta
    f_left = f_right = f_c
    w_left = w_right = c
    while span <= (b - a):
        w_left = max(a, c - span)
        w_right = min(b, c + span)
        f_left = ctx.eval_F(w_left)[0]
        f_right = ctx.eval_F(w_right)[0]
        if abs(f_left - f_c) > noise or abs(f_right - f_c) > noise:
            break
        if w_left == a and w_right == b:
            break
        span *= 2.0
    if f_c <= min(f_left, f_right) + noise:
        return True, False, 0.0
    if f_right < f_left:
        return False, True, (f_right - f_c) / max(w_right - c, 1e-300)
    return False, False, 0.0


def sweep_front(
    solver,
    weights: Sequence[float],
    utopia,
    master: Optional[MasterObjective] = None,
    kind: ScalarizationKind = ScalarizationKind.GOAL_ATTAINMENT,
    offsets=None,
) -> list[FrontPoint]:
    """Solve the scalarization on a weight grid (sequentially warm-started).

    Used for plots and as the nondominance oracle; failed grid points are
    recorded with a failure status instead of aborting the sweep.
    """
    points: list[FrontPoint] = []
    warm: Optional[SolveResult] = None
    for w in weights:
        if kind is ScalarizationKind.GOAL_ATTAINMENT:
            spec = goal_attainment_spec(float(w), utopia, offsets)
        else:
            spec = ScalarizationSpec(
                kind=ScalarizationKind.WEIGHTED_SUM,
                weights=np.array([float(w), 1.0 - float(w)]),
                offsets=offsets,
            )
        try:
            result = solver.solve(spec, warm)
        except Exception:  # noqa: BLE001 - recorded, not fatal
            points.append(
                FrontPoint(
                    w=float(w),
                    objectives=np.array([np.nan, np.nan]),
                    master_raw=float("nan"),
                    master_sqrt=float("nan"),
                    status="failed",
                )
            )
            continue
        warm = result
        raw = master.evaluate(result) if master is not None else float("nan")
        points.append(
            FrontPoint(
                w=float(w),
                objectives=result.objectives.values.copy(),
                master_raw=raw,
                master_sqrt=math.sqrt(raw) if raw >= 0 else float("nan"),
                status=result.nlp_status.value,
            )
        )
    return points


# ---------------------------------------------------------------------------
# serialization

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def front_points_to_csv(points: Sequence[FrontPoint], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "phi1", "phi2", "master_raw", "master_sqrt", "status"])
        for p in points:
            writer.writerow(
                [
                    _fmt(p.w),
                    _fmt(p.objectives[0]),
                    _fmt(p.objectives[1]),
                    _fmt(p.master_raw),
                    _fmt(p.master_sqrt),
                    p.status,
                ]
            )


def _sig4(x) -> Optional[float]:
    if x is None:
        return None
    return float(f"{float(x):.4g}")


def report_to_dict(report: BisectionReport) -> dict:
    return {
        "essential_interval": [report.essential_interval[0], report.essential_interval[1]],
        "boundary_points": [list(report.boundary_points[0]), list(report.boundary_points[1])],
        "utopia": list(map(float, report.utopia)),
        "endpoint_case": report.endpoint_case.value if report.endpoint_case else None,
        "f_prime_w0": report.f_prime_w0,
        "f_prime_wf": report.f_prime_wf,
        "iterations": [
            {"k": it.k, "a": it.a, "b": it.b, "c": it.c, "f_prime_c": it.f_prime_c}
            for it in report.iterations
        ],
        "w_star": report.w_star,
        "master_at_star": report.master_at_star,
        "master_sqrt_at_star": report.master_sqrt_at_star,
        "objectives_at_star": (
            list(map(float, report.objectives_at_star))
            if report.objectives_at_star is not None
            else None
        ),
        "termination": report.termination.value,
        "message": report.message,
        "n_ideal_solves": report.n_ideal_solves,
        "n_scalarized_solves": report.n_scalarized_solves,
        "total_solves": report.total_solves,
        "n_nlp_solves": report.n_nlp_solves,
        "display": {
            "w_star": _sig4(report.w_star),
            "master": _sig4(report.master_sqrt_at_star if report.master_sqrt_at_star is not None else report.master_at_star),
            "objectives": (
                [_sig4(v) for v in report.objectives_at_star]
                if report.objectives_at_star is not None
                else None
            ),
            "essential_interval": [_sig4(report.essential_interval[0]), _sig4(report.essential_interval[1])],
        },
    }


def report_to_json(report: BisectionReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def iterations_to_csv(report: BisectionReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "a", "b", "c", "f_prime_c"])
        for it in report.iterations:
            writer.writerow([it.k, _fmt(it.a), _fmt(it.b), _fmt(it.c), _fmt(it.f_prime_c)])
