"""Tunnel-diode oscillator (Rayleigh) test problem.

Bi-objective: minimize the terminal time and the accumulated squared
magnitude of current and generator voltage.  The running cost is augmented
as a third state, the horizon is free but capped (the pure energy problem
has no finite-time minimizer), and the single control is box constrained.
"""

from __future__ import annotations

import numpy as np

from chebfront.core import ControlProblem, FreeHorizon
from chebfront.front import MasterObjective

T_F_MAX = 5.0
X0 = np.array([-5.0, -5.0, 0.0])
MASTER_COEFFICIENTS = (100.0, 1.0)  # rescales the time objective to the energy's magnitude


def _dynamics(x, x_del, u, u_del, t):
    x1, x2 = x[0], x[1]
    v = u[0]
    return np.stack(
        [
            x2,
            -x1 + x2 * (1.4 - 0.14 * x2 * x2) + 4.0 * v,
            x1 * x1 + v * v,
        ]
    )


def _terminal_conditions(x0, xf, t_f):
    return np.stack([xf[0], xf[1]])


def rayleigh() -> tuple[ControlProblem, MasterObjective]:
    """Problem plus the distance-to-origin master objective."""
    problem = ControlProblem(
        n=3,
        m=1,
        r=2,
        dynamics=_dynamics,
        objectives=(
            lambda xf, t_f: t_f,
            lambda xf, t_f: xf[2],
        ),
        horizon=FreeHorizon(T_F_MAX),
        control_bounds=np.array([[-1.0, 1.0]]),
        initial_state=X0,
        boundary_eq=_terminal_conditions,
        vectorized=True,
    )
    master = MasterObjective.weighted_squared_norm(MASTER_COEFFICIENTS, report_sqrt=True)
    return problem, master
