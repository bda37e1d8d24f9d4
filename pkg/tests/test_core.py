import numpy as np
import pytest

from chebfront.core import (
    ControlProblem,
    EvaluationError,
    FixedHorizon,
    FreeHorizon,
    ObjectiveVector,
    Trajectory,
    delay_offset,
    eval_dynamics,
    eval_objectives,
    simulate,
)
from chebfront.problems import rayleigh, tuberculosis


def make_traj(times, states, controls=None):
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if controls is None:
        controls = np.zeros((times.size, 0))
    return Trajectory(times=times, states=states, controls=controls, t_f=float(times[-1]))


def test_rayleigh_dynamics_hand_value():
    problem, _ = rayleigh()
    traj = Trajectory(
        times=np.array([0.0, 1.0]),
        states=np.array([[-5.0, -5.0, 0.0], [0.0, 0.0, 0.0]]),
        controls=np.zeros((2, 1)),
        t_f=1.0,
    )
    rates = eval_dynamics(problem, traj, 0)
    assert rates == pytest.approx([-5.0, 15.5, 25.0])


def test_zero_input_integrator(integrator_problem):
    problem = integrator_problem
    traj = Trajectory(
        times=np.array([0.0, 1.0, 2.0]),
        states=np.zeros((3, 1)),
        controls=np.zeros((3, 1)),
        t_f=2.0,
    )
    assert eval_dynamics(problem, traj, 1) == pytest.approx([0.0])


def test_tb_delayed_history_value():
    # before the diagnosis delay has elapsed, the delayed infectious count
    # must come from the history level 5N/120 = 1250
    problem, _ = tuberculosis(beta=100.0)
    captured = {}
    orig = problem.dynamics

    def spy(x, xd, u, ud, t):
        captured["i_del"] = float(np.asarray(xd)[2])
        return orig(x, xd, u, ud, t)

    spied = ControlProblem(
        **{**{f.name: getattr(problem, f.name) for f in problem.__dataclass_fields__.values()},
           "dynamics": spy}
    )
    N = 50  # h = 0.1, delay offset 1
    times = np.linspace(0.0, 5.0, N + 1)
    states = np.tile(problem.initial_state, (N + 1, 1))
    states[:, 2] = np.linspace(1250.0, 900.0, N + 1)  # make stored I distinctive
    traj = Trajectory(times=times, states=states, controls=np.zeros((N + 1, 2)), t_f=5.0)
    eval_dynamics(spied, traj, 0)  # t - d < 0: history
    assert captured["i_del"] == pytest.approx(1250.0)
    eval_dynamics(spied, traj, 5)  # t - d >= 0: stored node value, exactly
    assert captured["i_del"] == states[4, 2]


def test_eval_objectives_values_and_purity():
    problem, _ = rayleigh()
    times = np.array([0.0, 3.668])
    states = np.array([[-5.0, -5.0, 0.0], [0.0, 0.0, 46.50]])
    traj = Trajectory(times=times, states=states, controls=np.zeros((2, 1)), t_f=3.668)
    objs = eval_objectives(problem, traj)
    assert objs.values == pytest.approx([3.668, 46.50])
    again = eval_objectives(problem, traj)
    assert np.array_equal(objs.values, again.values)


def test_eval_objectives_identity_toy():
    problem = ControlProblem(
        n=1, m=0, r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([0.0 * x[0]]),
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: xf[0]),
        horizon=FixedHorizon(1.0),
        control_bounds=np.zeros((0, 2)),
    )
    traj = make_traj([0.0, 1.0], [[1.0], [1.0]])
    assert eval_objectives(problem, traj).values == pytest.approx([1.0, 1.0])


def test_tb_terminal_objectives():
    problem, _ = tuberculosis(beta=100.0)
    times = np.array([0.0, 5.0])
    xf = np.array([1193.1, 28.2, 13.3, 864.0, 28155.0, 31133.0])
    states = np.vstack([problem.initial_state, xf])
    traj = Trajectory(times=times, states=states, controls=np.zeros((2, 2)), t_f=5.0)
    assert eval_objectives(problem, traj).values == pytest.approx([28155.0, 31133.0])


def test_non_finite_objective_raises():
    problem = ControlProblem(
        n=1, m=0, r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([0.0 * x[0]]),
        objectives=(lambda xf, tf: float("nan"), lambda xf, tf: 0.0),
        horizon=FixedHorizon(1.0),
        control_bounds=np.zeros((0, 2)),
    )
    traj = make_traj([0.0, 1.0], [[1.0], [1.0]])
    with pytest.raises(EvaluationError, match="objective 1"):
        eval_objectives(problem, traj)


def test_objective_vector_finite():
    with pytest.raises(EvaluationError):
        ObjectiveVector(np.array([1.0, np.inf]))


def test_problem_validation():
    dyn = lambda x, xd, u, ud, t: x
    objs = (lambda xf, tf: 0.0, lambda xf, tf: 0.0)
    with pytest.raises(ValueError, match="r >= 2"):
        ControlProblem(n=1, m=0, r=1, dynamics=dyn, objectives=objs[:1],
                       horizon=FixedHorizon(1.0), control_bounds=np.zeros((0, 2)))
    with pytest.raises(ValueError, match="lo <= hi"):
        ControlProblem(n=1, m=1, r=2, dynamics=dyn, objectives=objs,
                       horizon=FixedHorizon(1.0), control_bounds=np.array([[1.0, -1.0]]))
    with pytest.raises(ValueError, match="nonnegative"):
        ControlProblem(n=1, m=0, r=2, dynamics=dyn, objectives=objs,
                       horizon=FixedHorizon(1.0), control_bounds=np.zeros((0, 2)),
                       state_delay=-0.1)
    with pytest.raises(ValueError, match="fixed horizon"):
        ControlProblem(n=1, m=0, r=2, dynamics=dyn, objectives=objs,
                       horizon=FreeHorizon(2.0), control_bounds=np.zeros((0, 2)),
                       state_delay=0.5, state_history=lambda t: np.zeros(1))
    with pytest.raises(ValueError, match="history"):
        ControlProblem(n=1, m=0, r=2, dynamics=dyn, objectives=objs,
                       horizon=FixedHorizon(1.0), control_bounds=np.zeros((0, 2)),
                       state_delay=0.5)
    with pytest.raises(ValueError):
        FreeHorizon(-1.0)


def test_trajectory_validation():
    with pytest.raises(ValueError, match="start at time zero"):
        make_traj([1.0, 2.0], [[0.0], [0.0]])
    with pytest.raises(ValueError, match="strictly increasing"):
        make_traj([0.0, 0.0], [[0.0], [0.0]])
    with pytest.raises(ValueError, match="one row per grid time"):
        Trajectory(times=np.array([0.0, 1.0]), states=np.zeros((3, 1)),
                   controls=np.zeros((2, 0)), t_f=1.0)


def test_delay_offset():
    assert delay_offset(0.0, 0.1) == 0
    assert delay_offset(0.2, 0.01) == 20
    with pytest.raises(ValueError, match="integer multiple"):
        delay_offset(0.15, 0.1)


def test_simulate_constant_rate():
    problem = ControlProblem(
        n=1, m=0, r=2,
        dynamics=lambda x, xd, u, ud, t: np.array([1.0]),
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: -xf[0]),
        horizon=FixedHorizon(2.0),
        control_bounds=np.zeros((0, 2)),
        initial_state=np.array([0.0]),
    )
    traj = simulate(problem, None, 10)
    assert traj.states[-1, 0] == pytest.approx(2.0)
    assert traj.times[-1] == 2.0
