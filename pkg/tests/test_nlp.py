import numpy as np
import pytest

from chebfront.nlp import (
    NlpProblem,
    SolverOptions,
    SolverStatus,
    fd_gradient,
    fd_jacobian,
    kkt_check,
    solve,
)


def projection_problem():
    # min (z1-1)^2 + (z2-2)^2  s.t. z1 + z2 = 1
    return NlpProblem(
        dim=2,
        objective=lambda z: (z[0] - 1.0) ** 2 + (z[1] - 2.0) ** 2,
        eq=lambda z: np.array([z[0] + z[1] - 1.0]),
    )


def bound_problem():
    # min z^2 s.t. z >= 3
    return NlpProblem(
        dim=1,
        objective=lambda z: float(z[0] ** 2),
        bounds=np.array([[3.0, np.inf]]),
    )


def attainment_problem():
    # min a  s.t. 0.5 z^2 <= a, 0.5 (z-2)^2 <= a, a >= 0
    return NlpProblem(
        dim=2,
        objective=lambda z: float(z[1]),
        ineq=lambda z: np.array([0.5 * z[0] ** 2 - z[1], 0.5 * (z[0] - 2.0) ** 2 - z[1]]),
        bounds=np.array([[-np.inf, np.inf], [0.0, np.inf]]),
    )


def test_projection_onto_line():
    # closed-form KKT: projection of (1,2) onto z1+z2=1 is (0,1), multiplier 2
    sol = solve(projection_problem())
    assert sol.status is SolverStatus.SUCCESS
    assert sol.z == pytest.approx([0.0, 1.0], abs=1e-6)
    assert sol.eq_multipliers == pytest.approx([2.0], abs=1e-6)
    assert sol.kkt_residual <= 1e-8
    assert sol.feas_violation <= 1e-8


def test_active_bound():
    sol = solve(bound_problem())
    assert sol.status is SolverStatus.SUCCESS
    assert sol.z == pytest.approx([3.0], abs=1e-9)


def test_goal_attainment_toy_matches_grid_oracle():
    # 1-D oracle: alpha(z) = max(z^2, (z-2)^2)/2 minimized over a dense grid
    grid = np.linspace(-1.0, 3.0, 400001)
    alpha = np.maximum(0.5 * grid**2, 0.5 * (grid - 2.0) ** 2)
    j = np.argmin(alpha)
    z_oracle, a_oracle = grid[j], alpha[j]
    assert z_oracle == pytest.approx(1.0, abs=1e-5)
    assert a_oracle == pytest.approx(0.5, abs=1e-5)

    sol = solve(attainment_problem(), warm_start=np.array([0.3, 1.0]))
    assert sol.status is SolverStatus.SUCCESS
    assert sol.z[0] == pytest.approx(z_oracle, abs=1e-5)
    assert sol.z[1] == pytest.approx(a_oracle, abs=1e-6)
    assert np.all(sol.ineq_multipliers >= 0)


@pytest.mark.parametrize("make", [projection_problem, bound_problem, attainment_problem])
def test_kkt_check_passes_at_success(make):
    problem = make()
    warm = np.array([0.3, 1.0]) if make is attainment_problem else None
    sol = solve(problem, warm_start=warm)
    report = kkt_check(problem, sol, 1e-8)
    assert report.passed


def test_kkt_check_fails_after_perturbation():
    problem = projection_problem()
    sol = solve(problem)
    sol.z = sol.z + 1e-2
    report = kkt_check(problem, sol, 1e-8)
    assert report.stationarity > 1e-8 or report.feasibility > 1e-8


def test_kkt_check_unconstrained_quadratic():
    problem = NlpProblem(dim=1, objective=lambda z: float((z[0] - 3.0) ** 2))
    sol = solve(problem, warm_start=np.array([0.0]))
    report = kkt_check(problem, sol, 1e-8)
    assert report.stationarity <= 1e-8
    assert report.feasibility == 0.0
    assert report.complementarity == 0.0


def test_monotone_feasibility_on_trace():
    # while above the feasibility tolerance, the violation must not grow
    tol = SolverOptions().tol_feas
    for make in (projection_problem, attainment_problem):
        warm = np.array([5.0, 0.0]) if make is attainment_problem else np.array([4.0, 4.0])
        sol = solve(make(), warm_start=warm)
        feas = [row[2] for row in sol.trace]
        for a, b in zip(feas, feas[1:]):
            assert b <= a * (1 + 1e-9) or b <= 10 * tol


def test_warm_start_with_solution_terminates_quickly():
    problem = projection_problem()
    sol = solve(problem)
    again = solve(problem, warm_start=sol)
    assert again.status is SolverStatus.SUCCESS
    assert again.iterations <= 2
    assert again.z == pytest.approx(sol.z, abs=1e-8)


def test_deterministic_bitwise():
    a = solve(attainment_problem(), warm_start=np.array([0.3, 1.0]))
    b = solve(attainment_problem(), warm_start=np.array([0.3, 1.0]))
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.ineq_multipliers, b.ineq_multipliers)
    assert a.kkt_residual == b.kkt_residual
    assert a.trace == b.trace


def test_infeasible_detection():
    problem = NlpProblem(
        dim=1,
        objective=lambda z: float(z[0]),
        ineq=lambda z: np.array([z[0] ** 2 + 1.0]),  # z^2 + 1 <= 0 impossible
    )
    sol = solve(problem, SolverOptions(max_outer=40), warm_start=np.array([0.0]))
    assert sol.status is SolverStatus.INFEASIBLE


def test_trace_dump(tmp_path):
    path = tmp_path / "trace.csv"
    solve(projection_problem(), SolverOptions(trace_file=str(path)))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,objective,feas_violation,kkt_residual"
    assert len(lines) >= 2


def test_lbfgsb_inner_path():
    sol = solve(projection_problem(), SolverOptions(inner_method="lbfgsb"))
    assert sol.status is SolverStatus.SUCCESS
    assert sol.z == pytest.approx([0.0, 1.0], abs=1e-6)


def test_scaling_reports_raw_multipliers():
    base = solve(projection_problem())
    scaled = NlpProblem(
        dim=2,
        objective=lambda z: (z[0] - 1.0) ** 2 + (z[1] - 2.0) ** 2,
        eq=lambda z: np.array([z[0] + z[1] - 1.0]),
        x_scale=np.array([10.0, 0.5]),
        eq_scale=np.array([4.0]),
        f_scale=2.0,
    )
    sol = solve(scaled, SolverOptions(tol_kkt=1e-6, tol_feas=1e-8))
    assert sol.status is SolverStatus.SUCCESS
    assert sol.z == pytest.approx(base.z, abs=1e-5)
    assert sol.eq_multipliers == pytest.approx(base.eq_multipliers, abs=1e-5)


def test_fd_helpers():
    fun = lambda z: float(z[0] ** 2 + 3.0 * z[1])
    grad = fd_gradient(fun, np.array([1.0, 2.0]), 1e-7, central=True)
    assert grad == pytest.approx([2.0, 3.0], abs=1e-8)
    vec = lambda z: np.array([z[0] * z[1], z[0] - z[1]])
    jac = fd_jacobian(vec, np.array([2.0, 5.0]), 1e-7, central=True)
    assert jac == pytest.approx(np.array([[5.0, 2.0], [1.0, -1.0]]), abs=1e-7)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(tol_kkt=-1.0)
    with pytest.raises(ValueError):
        SolverOptions(penalty_growth=0.5)
    with pytest.raises(ValueError):
        SolverOptions(inner_method="nope")
