"""Data model for multi-objective optimal control problems.

A :class:`ControlProblem` describes continuous-time dynamics (optionally with
state/control time delays), boundary and path constraints, bounds, and r >= 2
terminal-cost objectives.  Objectives are stored in Mayer form only; running
costs must be pre-augmented as extra states by the problem author.

Dynamics callables have the signature ``f(x, x_del, u, u_del, t)`` and return
the state rates.  When ``vectorized`` is set, the callable must also accept
batched arguments of shape ``(n, K)`` / ``(m, K)`` with ``t`` of shape
``(K,)`` and return ``(n, K)``; every built-in problem supports this, and the
transcription exploits it heavily.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class EvaluationError(RuntimeError):
    """Non-finite value produced by a problem callable."""


@dataclass(frozen=True)
class FixedHorizon:
    t_f: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.t_f) or self.t_f <= 0:
            raise ValueError("fixed horizon must be a positive finite time")


@dataclass(frozen=True)
class FreeHorizon:
    t_f_max: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.t_f_max) or self.t_f_max <= 0:
            raise ValueError("free horizon requires a finite positive upper bound")


Horizon = FixedHorizon | FreeHorizon


@dataclass(frozen=True)
class ControlProblem:
    """Immutable description of a (possibly delayed) optimal control problem.

    Shareable across concurrent evaluations; all evaluation helpers are pure.
    """

    n: int
    m: int
    r: int
    dynamics: Callable  # f(x, x_del, u, u_del, t) -> rates
    objectives: tuple[Callable, ...]  # phi_i(x_f, t_f) -> float, Mayer form
    horizon: Horizon
    control_bounds: np.ndarray  # (m, 2)
    initial_state: Optional[np.ndarray] = None
    boundary_eq: Optional[Callable] = None  # theta(x0, xf, t_f) = 0
    boundary_ineq: Optional[Callable] = None  # theta~(x0, xf, t_f) <= 0
    path_constraint: Optional[Callable] = None  # C(x, u, t) <= 0
    state_constraint: Optional[Callable] = None  # S(x, t) <= 0
    state_bounds: Optional[np.ndarray] = None  # (n, 2)
    state_delay: float = 0.0
    control_delays: Optional[np.ndarray] = None  # (m,)
    state_history: Optional[Callable] = None  # x0(t) on [-d_x, 0)
    control_history: Optional[Callable] = None  # u0(t) on [-d_u, 0)
    vectorized: bool = False
    scale_hint: Optional[np.ndarray] = None  # typical |state| magnitudes

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 state and m >= 0 controls")
        if self.r < 2:
            raise ValueError("multi-objective problems need r >= 2 objectives")
        if len(self.objectives) != self.r:
            raise ValueError("objectives tuple must have r entries")
        cb = np.asarray(self.control_bounds, dtype=float).reshape(self.m, 2)
        object.__setattr__(self, "control_bounds", cb)
        if np.any(cb[:, 0] > cb[:, 1]):
            raise ValueError("control bounds must satisfy lo <= hi per channel")
        if self.state_bounds is not None:
            sb = np.asarray(self.state_bounds, dtype=float).reshape(self.n, 2)
            object.__setattr__(self, "state_bounds", sb)
            if np.any(sb[:, 0] > sb[:, 1]):
                raise ValueError("state bounds must satisfy lo <= hi per channel")
        if self.initial_state is not None:
            x0 = np.asarray(self.initial_state, dtype=float).reshape(self.n)
            object.__setattr__(self, "initial_state", x0)
        if self.state_delay < 0:
            raise ValueError("delays must be nonnegative")
        if self.control_delays is not None:
            cd = np.asarray(self.control_delays, dtype=float).reshape(self.m)
            object.__setattr__(self, "control_delays", cd)
            if np.any(cd < 0):
                raise ValueError("delays must be nonnegative")
        if self.has_delays and isinstance(self.horizon, FreeHorizon):
            raise ValueError("time delays require a fixed horizon")
        if self.state_delay > 0 and self.state_history is None:
            raise ValueError("state delay requires a state history function")
        if self.any_control_delay > 0 and self.control_history is None:
            raise ValueError("control delay requires a control history function")
        if self.scale_hint is not None:
            sh = np.asarray(self.scale_hint, dtype=float).reshape(self.n)
            object.__setattr__(self, "scale_hint", sh)
            if np.any(sh <= 0):
                raise ValueError("scale_hint entries must be positive")

    @property
    def any_control_delay(self) -> float:
        if self.control_delays is None:
            return 0.0
        return float(np.max(self.control_delays)) if self.m else 0.0

    @property
    def has_delays(self) -> bool:
        return self.state_delay > 0 or self.any_control_delay > 0


@dataclass(frozen=True)
class Trajectory:
    """Discrete (times, states, controls) representation of a solution."""

    times: np.ndarray  # (N+1,), times[0] = 0, strictly increasing
    states: np.ndarray  # (N+1, n)
    controls: np.ndarray  # (N+1, m)
    t_f: float

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(times.size, -1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        if times[0] != 0.0:
            raise ValueError("trajectory must start at time zero")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.isclose(times[-1], self.t_f, rtol=1e-12, atol=1e-12):
            raise ValueError("last grid time must equal t_f")
        if states.shape[0] != times.size or controls.shape[0] != times.size:
            raise ValueError("states/controls must have one row per grid time")

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class ObjectiveVector:
    values: np.ndarray  # (r,)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise EvaluationError("objective vector has non-finite entries")

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])

    def __len__(self) -> int:
        return self.values.size


def delay_offset(delay: float, h: float, what: str = "delay") -> int:
    """Integer node offset for a delay on a uniform mesh of step h.

    The delay must be a (near-exact) nonnegative integer multiple of h; delays
    are resolved by exact node shifts, never by interpolation.
    """
    if delay == 0.0:
        return 0
    ratio = delay / h
    offset = int(round(ratio))
    if abs(ratio - offset) > 1e-6 * max(1.0, ratio):
        raise ValueError(f"{what} {delay} is not an integer multiple of the mesh step {h}")
    return offset


def delayed_arguments(
    problem: ControlProblem, traj: Trajectory, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Delayed state and control at node k: stored node values for
    nonnegative delayed indices, history functions otherwise."""
    h = float(traj.times[1] - traj.times[0])
    t_k = float(traj.times[k])
    if problem.state_delay > 0:
        off = delay_offset(problem.state_delay, h, "state delay")
        if k - off >= 0:
            x_del = traj.states[k - off]
        else:
            x_del = np.asarray(problem.state_history(t_k - problem.state_delay), dtype=float)
    else:
        x_del = traj.states[k]
    if problem.m == 0:
        return x_del, traj.controls[k]
    u_del = np.array(traj.controls[k], dtype=float)
    if problem.control_delays is not None:
        for j in range(problem.m):
            d = problem.control_delays[j]
            if d <= 0:
                continue
            off = delay_offset(d, h, "control delay")
            if k - off >= 0:
                u_del[j] = traj.controls[k - off, j]
            else:
                hist = np.atleast_1d(np.asarray(problem.control_history(t_k - d), dtype=float))
                u_del[j] = hist[j] if hist.size > 1 else hist[0]
    return x_del, u_del


def eval_dynamics(problem: ControlProblem, traj: Trajectory, k: int) -> np.ndarray:
    """State rates at node k, with delayed arguments resolved by integer node
    shifts or, for negative delayed times, by the history functions."""
    if not 0 <= k < traj.times.size:
        raise IndexError(f"node index {k} outside trajectory grid")
    x_del, u_del = delayed_arguments(problem, traj, k)
    rates = np.asarray(
        problem.dynamics(traj.states[k], x_del, traj.controls[k], u_del, float(traj.times[k])),
        dtype=float,
    ).reshape(problem.n)
    if not np.all(np.isfinite(rates)):
        raise EvaluationError(f"dynamics produced non-finite rates at node {k}")
    return rates


def eval_objectives(problem: ControlProblem, traj: Trajectory) -> ObjectiveVector:
    """All r Mayer objectives at (x(t_f), t_f).  Pure in its inputs."""
    x_f = traj.terminal_state
    values = np.empty(problem.r)
    for i, phi in enumerate(problem.objectives):
        values[i] = float(phi(x_f, traj.t_f))
        if not np.isfinite(values[i]):
            raise EvaluationError(f"objective {i + 1} is non-finite at the terminal state")
    return ObjectiveVector(values)


def simulate(
    problem: ControlProblem,
    controls: np.ndarray | Callable | None,
    n_intervals: int,
    t_f: Optional[float] = None,
) -> Trajectory:
    """Explicit-Euler rollout on a uniform mesh with exact delay offsets.

    ``controls`` may be an (N+1, m) array, a callable u(t), or None for
    mid-bound controls.  Intended for seeds and sanity checks, not accuracy.
    """
    if t_f is None:
        if not isinstance(problem.horizon, FixedHorizon):
            raise ValueError("free-horizon simulation needs an explicit t_f")
        t_f = problem.horizon.t_f
    N = int(n_intervals)
    h = t_f / N
    times = np.linspace(0.0, t_f, N + 1)
    if problem.m == 0:
        u_grid = np.zeros((N + 1, 0))
    elif controls is None:
        mid = 0.5 * (problem.control_bounds[:, 0] + problem.control_bounds[:, 1])
        u_grid = np.tile(mid, (N + 1, 1))
    elif callable(controls):
        u_grid = np.array([np.atleast_1d(controls(t)) for t in times], dtype=float)
    else:
        u_grid = np.asarray(controls, dtype=float).reshape(N + 1, problem.m)

    if problem.initial_state is None:
        raise ValueError("simulation needs a fixed initial state")
    states = np.empty((N + 1, problem.n))
    states[0] = problem.initial_state
    off_x = delay_offset(problem.state_delay, h, "state delay")
    off_u = [
        delay_offset(d, h, "control delay")
        for d in (problem.control_delays if problem.control_delays is not None else np.zeros(problem.m))
    ]
    for k in range(N):
        if off_x and k - off_x < 0:
            x_del = np.asarray(problem.state_history(times[k] - problem.state_delay), dtype=float)
        else:
            x_del = states[k - off_x] if off_x else states[k]
        u_del = u_grid[k].copy()
        for j, off in enumerate(off_u):
            if off and k - off < 0:
                hist = np.atleast_1d(
                    np.asarray(problem.control_history(times[k] - problem.control_delays[j]), dtype=float)
                )
                u_del[j] = hist[j] if hist.size > 1 else hist[0]
            elif off:
                u_del[j] = u_grid[k - off, j]
        rates = np.asarray(
            problem.dynamics(states[k], x_del, u_grid[k], u_del, times[k]), dtype=float
        ).reshape(problem.n)
        states[k + 1] = states[k] + h * rates
    return Trajectory(times=times, states=states, controls=u_grid, t_f=t_f)


def trajectory_from_arrays(
    times: Sequence[float], states, controls, problem: Optional[ControlProblem] = None
) -> Trajectory:
    times = np.asarray(times, dtype=float)
    return Trajectory(times=times, states=states, controls=controls, t_f=float(times[-1]))
