import numpy as np
import pytest

from chebfront.core import ControlProblem, FixedHorizon


@pytest.fixture
def integrator_problem():
    """x' = u, x(0) = 0, u fixed to 1 by its bounds."""
    return ControlProblem(
        n=1,
        m=1,
        r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([u[0]]),
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: -xf[0]),
        horizon=FixedHorizon(2.0),
        control_bounds=np.array([[1.0, 1.0]]),
        initial_state=np.array([0.0]),
        vectorized=True,
    )


@pytest.fixture
def exponential_problem():
    """x' = x, x(0) = 1 on [0, 1]; trapezoidal solves converge to e."""
    return ControlProblem(
        n=1,
        m=0,
        r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([x[0]]),
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: -xf[0]),
        horizon=FixedHorizon(1.0),
        control_bounds=np.zeros((0, 2)),
        initial_state=np.array([1.0]),
        vectorized=True,
    )


@pytest.fixture
def static_parabolas_problem():
    """Static trade-off as a degenerate control problem: x' = 0, x(0) free,
    terminal objectives x^2 and (x-2)^2."""
    return ControlProblem(
        n=1,
        m=0,
        r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([0.0 * x[0]]),
        objectives=(lambda xf, tf: xf[0] ** 2, lambda xf, tf: (xf[0] - 2.0) ** 2),
        horizon=FixedHorizon(1.0),
        control_bounds=np.zeros((0, 2)),
        state_bounds=np.array([[-5.0, 5.0]]),
        vectorized=True,
    )
