import numpy as np
import pytest

from chebfront.core import ControlProblem, FixedHorizon
from chebfront.nlp import SolverOptions
from chebfront.scalarize import (
    ScalarizationError,
    ScalarizationKind,
    ScalarizationSpec,
    ScalarizedOcpSolver,
    bi_objective_weights,
    goal_attainment_spec,
    ideal_costs,
    solve_scalarized,
    utopia_vector,
)
from chebfront.transcription import TranscriptionConfig

CFG = TranscriptionConfig(n_intervals=4)
OPTS = SolverOptions()


def grid_oracle(w, utopia, offsets=(0.0, 0.0)):
    """Dense 1-D Chebyshev oracle for the static parabolas."""
    x = np.linspace(-5.0, 5.0, 400001)
    phi = np.vstack([x**2 + offsets[0], (x - 2.0) ** 2 + offsets[1]])
    vals = np.maximum(w * (phi[0] - utopia[0]), (1 - w) * (phi[1] - utopia[1]))
    j = np.argmin(vals)
    return x[j], phi[:, j], vals[j]


def test_utopia_vector():
    assert utopia_vector(np.array([1.0, 2.0]), eta=np.array([1.0, 1.0])) == pytest.approx([0.0, 1.0])
    assert utopia_vector(np.array([3.0, 4.0]), override=np.zeros(2)) == pytest.approx([0.0, 0.0])
    # default shift: 0.01|ideal| + 0.01
    assert utopia_vector(np.array([100.0, 0.0])) == pytest.approx([98.99, -0.01])
    with pytest.raises(ValueError):
        utopia_vector(np.array([1.0, 1.0]), eta=np.array([0.0, 1.0]))


def test_spec_validation():
    with pytest.raises(ValueError, match="sum to one"):
        ScalarizationSpec(kind=ScalarizationKind.WEIGHTED_SUM, weights=np.array([0.7, 0.7]))
    with pytest.raises(ValueError, match="nonnegative"):
        ScalarizationSpec(kind=ScalarizationKind.WEIGHTED_SUM, weights=np.array([1.5, -0.5]))
    with pytest.raises(ValueError, match="utopia"):
        ScalarizationSpec(kind=ScalarizationKind.GOAL_ATTAINMENT, weights=np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="objective index"):
        ScalarizationSpec(kind=ScalarizationKind.SINGLE_OBJECTIVE, weights=np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        bi_objective_weights(1.2)


def test_goal_attainment_matches_grid_oracle(static_parabolas_problem):
    x_star, phi_star, alpha_star = grid_oracle(0.5, np.zeros(2))
    assert x_star == pytest.approx(1.0, abs=1e-4)
    result = solve_scalarized(
        static_parabolas_problem, goal_attainment_spec(0.5, np.zeros(2)), CFG, options=OPTS
    )
    assert result.success
    assert result.trajectory.states[-1, 0] == pytest.approx(x_star, abs=1e-5)
    assert result.objectives.values == pytest.approx(phi_star, abs=1e-4)
    assert result.alpha == pytest.approx(alpha_star, abs=1e-6)


def test_attainment_tightness(static_parabolas_problem):
    for w in (0.3, 0.5, 0.7):
        res = solve_scalarized(
            static_parabolas_problem, goal_attainment_spec(w, np.zeros(2)), CFG, options=OPTS
        )
        rows = np.array([w, 1 - w]) * res.objectives.values
        assert np.max(rows) == pytest.approx(res.alpha, abs=1e-6)


def test_positivity_offsets_leave_argmin(static_parabolas_problem):
    base = solve_scalarized(
        static_parabolas_problem, goal_attainment_spec(0.5, np.zeros(2)), CFG, options=OPTS
    )
    shifted_utopia = np.array([5.0, 7.0])  # utopia shifted by the same offsets
    shifted = solve_scalarized(
        static_parabolas_problem,
        goal_attainment_spec(0.5, shifted_utopia, offsets=np.array([5.0, 7.0])),
        CFG,
        options=OPTS,
    )
    assert shifted.trajectory.states[-1, 0] == pytest.approx(
        base.trajectory.states[-1, 0], abs=1e-5
    )


def test_weighted_sum_mode(static_parabolas_problem):
    spec = ScalarizationSpec(kind=ScalarizationKind.WEIGHTED_SUM, weights=np.array([0.5, 0.5]))
    res = solve_scalarized(static_parabolas_problem, spec, CFG, options=OPTS)
    # 0.5 x^2 + 0.5 (x-2)^2 is minimized at x = 1
    assert res.trajectory.states[-1, 0] == pytest.approx(1.0, abs=1e-6)


def test_ideal_costs_static(static_parabolas_problem):
    phi1, objs, res = ideal_costs(static_parabolas_problem, CFG, 1, options=OPTS)
    assert phi1 == pytest.approx(0.0, abs=1e-8)
    assert res.trajectory.states[-1, 0] == pytest.approx(0.0, abs=1e-4)
    phi2, objs2, _ = ideal_costs(static_parabolas_problem, CFG, 2, options=OPTS, warm=res)
    assert phi2 == pytest.approx(0.0, abs=1e-8)
    assert objs2[0] == pytest.approx(4.0, abs=1e-4)
    with pytest.raises(ValueError):
        ideal_costs(static_parabolas_problem, CFG, 3, options=OPTS)


def test_infeasible_scalarization_carries_weights():
    problem = ControlProblem(
        n=1, m=1, r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([u[0]]),
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: -xf[0]),
        horizon=FixedHorizon(1.0),
        control_bounds=np.array([[-1.0, 1.0]]),
        initial_state=np.array([0.0]),
        boundary_eq=lambda x0, xf, tf: np.stack([xf[0] - 5.0]),  # unreachable
        vectorized=True,
    )
    with pytest.raises(ScalarizationError) as err:
        solve_scalarized(
            problem, goal_attainment_spec(0.5, np.zeros(2)),
            TranscriptionConfig(n_intervals=8), options=SolverOptions(max_outer=30),
        )
    assert err.value.weights == pytest.approx([0.5, 0.5])


def test_solver_interface(static_parabolas_problem):
    solver = ScalarizedOcpSolver(static_parabolas_problem, CFG, OPTS)
    assert solver.r == 2
    res = solver.solve(goal_attainment_spec(0.5, np.zeros(2)))
    assert res.success
    warm = solver.solve(goal_attainment_spec(0.52, np.zeros(2)), res)
    assert warm.success
