"""Analytic one-dimensional toy problems with brute-force scalarization.

These implement the same lower-level solve surface the front optimizer
consumes, with dense-grid argmin plus golden-section refinement instead of
transcription + NLP, so the bisection machinery is testable against cheap
exact oracles.  The nonconvex variant has a front with a concave segment,
the classic case where weighted-sum scalarization cannot reach parts of the
front that the Chebyshev scalarization does.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from chebfront.core import ObjectiveVector, Trajectory
from chebfront.front import MasterObjective
from chebfront.nlp import SolverStatus
from chebfront.scalarize import ScalarizationKind, ScalarizationSpec, SolveResult

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section(fun: Callable[[float], float], lo: float, hi: float, iters: int = 80):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


class AnalyticScalarizedSolver:
    """Scalarized solves of a 2-objective outcome curve phi(x), x in [lo, hi].

    ``phi_fns`` are vectorized scalar->scalar maps.  Solves run a dense-grid
    argmin followed by local golden-section refinement inside the winning
    grid cell; deterministic and independent of the NLP stack.
    """

    r = 2

    def __init__(self, phi_fns, lo: float, hi: float, grid_points: int = 20001, name: str = ""):
        self.phi_fns = phi_fns
        self.lo = float(lo)
        self.hi = float(hi)
        self.name = name
        self.grid = np.linspace(self.lo, self.hi, grid_points)
        self.phi_grid = np.vstack([np.asarray(f(self.grid), dtype=float) for f in phi_fns])

    def _phi_at(self, x: float) -> np.ndarray:
        return np.array([float(f(x)) for f in self.phi_fns])

    def _scalar_value(self, spec: ScalarizationSpec) -> Callable[[float], float]:
        offs = np.zeros(2) if spec.offsets is None else spec.offsets
        if spec.kind is ScalarizationKind.GOAL_ATTAINMENT:
            return lambda x: float(
                np.max(spec.weights * (self._phi_at(x) + offs - spec.utopia))
            )
        if spec.kind is ScalarizationKind.WEIGHTED_SUM:
            return lambda x: float(spec.weights @ (self._phi_at(x) + offs))
        i = spec.objective_index
        return lambda x: float(self.phi_fns[i](x) + offs[i])

    def _grid_values(self, spec: ScalarizationSpec) -> np.ndarray:
        offs = np.zeros(2) if spec.offsets is None else spec.offsets
        shifted = self.phi_grid + offs[:, None]
        if spec.kind is ScalarizationKind.GOAL_ATTAINMENT:
            return np.max(spec.weights[:, None] * (shifted - spec.utopia[:, None]), axis=0)
        if spec.kind is ScalarizationKind.WEIGHTED_SUM:
            return spec.weights @ shifted
        return shifted[spec.objective_index]

    def solve(self, spec: ScalarizationSpec, warm: Optional[SolveResult] = None) -> SolveResult:
        values = self._grid_values(spec)
        j = int(np.argmin(values))
        lo = self.grid[max(j - 1, 0)]
        hi = self.grid[min(j + 1, self.grid.size - 1)]
        fun = self._scalar_value(spec)
        x, val = _golden_section(fun, lo, hi)
        if values[j] < val:
            x, val = float(self.grid[j]), float(values[j])
        phi = self._phi_at(x)
        alpha = None
        if spec.kind is ScalarizationKind.GOAL_ATTAINMENT:
            offs = np.zeros(2) if spec.offsets is None else spec.offsets
            alpha = float(np.max(spec.weights * (phi + offs - spec.utopia)))
        traj = Trajectory(
            times=np.array([0.0]),
            states=np.array([[x]]),
            controls=np.zeros((1, 0)),
            t_f=0.0,
        )
        return SolveResult(
            trajectory=traj,
            objectives=ObjectiveVector(phi),
            alpha=alpha,
            adjoints=None,
            nlp_status=SolverStatus.SUCCESS,
            w_used=spec.weights.copy(),
        )


def nonconvex_boundary(y1):
    """Lower boundary of the nonconvex outcome set; concave on (0.5, 1)."""
    y1 = np.asarray(y1, dtype=float)
    return 1.0 - y1 - 0.3 * np.sin(2.0 * np.pi * y1)


def toy_static(kind: str) -> tuple[AnalyticScalarizedSolver, MasterObjective]:
    """'convex': two parabolas phi = (x^2, (x-2)^2) on [-5, 5].
    'nonconvex': outcome curve (y1, g(y1)) on [0, 1] with a concave stretch.
    """
    if kind in ("convex", "convex-parabolas"):
        solver = AnalyticScalarizedSolver(
            (lambda x: np.square(x), lambda x: np.square(x - 2.0)),
            lo=-5.0,
            hi=5.0,
            name="toy-convex",
        )
    elif kind in ("nonconvex", "nonconvex-front"):
        solver = AnalyticScalarizedSolver(
            (lambda x: np.asarray(x, dtype=float), nonconvex_boundary),
            lo=0.0,
            hi=1.0,
            name="toy-nonconvex",
        )
    else:
        raise ValueError("toy kind must be 'convex' or 'nonconvex'")
    master = MasterObjective.weighted_squared_norm((1.0, 1.0), report_sqrt=True)
    return solver, master
