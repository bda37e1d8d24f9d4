import math

import numpy as np
import pytest

from chebfront.core import ControlProblem, FixedHorizon, FreeHorizon
from chebfront.nlp import SolverOptions, SolverStatus, solve
from chebfront.problems import rayleigh, tuberculosis
from chebfront.scalarize import ScalarizationKind, ScalarizationSpec, goal_attainment_spec
from chebfront.transcription import (
    ConfigurationError,
    Scheme,
    TranscriptionConfig,
    build_seed,
    defect_residuals,
    estimate_adjoints,
    extract_trajectory,
    transcribe,
)

OPTS = SolverOptions()


def test_constant_control_integrator_exact(integrator_problem):
    # x' = u with u pinned to 1: trapezoidal quadrature is exact
    cfg = TranscriptionConfig(n_intervals=10)
    nlp, layout = transcribe(integrator_problem, cfg)
    z0 = build_seed(integrator_problem, cfg, layout)
    sol = solve(nlp, OPTS, z0)
    traj = extract_trajectory(sol, layout)
    assert traj.states[-1, 0] == pytest.approx(2.0, abs=1e-8)
    assert np.abs(defect_residuals(nlp, layout, sol.z)).max() < 1e-8


def test_tb_delay_offsets():
    problem, _ = tuberculosis()
    cfg = TranscriptionConfig(n_intervals=500)
    _, layout = transcribe(problem, cfg)
    trans = layout._transcribed
    assert trans.off_x == 10  # 0.1 / 0.01
    assert trans.off_u == [20, 20]  # 0.2 / 0.01


def test_delay_divisibility_error():
    problem, _ = tuberculosis()
    with pytest.raises(ConfigurationError, match="integer multiple"):
        transcribe(problem, TranscriptionConfig(n_intervals=33))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TranscriptionConfig(n_intervals=1)
    with pytest.raises(ConfigurationError):
        TranscriptionConfig(n_intervals=10, seed_mode="guess")


def exponential_terminal(problem, n_intervals):
    cfg = TranscriptionConfig(n_intervals=n_intervals)
    nlp, layout = transcribe(problem, cfg)
    z0 = build_seed(problem, cfg, layout)
    sol = solve(nlp, OPTS, z0)
    assert sol.feas_violation <= 1e-8
    return extract_trajectory(sol, layout).states[-1, 0]


def test_trapezoidal_second_order_convergence(exponential_problem):
    err_n = abs(exponential_terminal(exponential_problem, 16) - math.e)
    err_2n = abs(exponential_terminal(exponential_problem, 32) - math.e)
    assert 3.5 <= err_n / err_2n <= 4.5


def test_euler_first_order(exponential_problem):
    cfg = TranscriptionConfig(n_intervals=64, scheme=Scheme.EULER)
    nlp, layout = transcribe(exponential_problem, cfg)
    sol = solve(nlp, OPTS, build_seed(exponential_problem, cfg, layout))
    x_end = extract_trajectory(sol, layout).states[-1, 0]
    # Euler underestimates e at first order: (1 + 1/64)^64
    assert x_end == pytest.approx((1 + 1 / 64) ** 64, abs=1e-6)


def test_round_trip_extract(integrator_problem):
    cfg = TranscriptionConfig(n_intervals=7)
    nlp, layout = transcribe(integrator_problem, cfg)
    z0 = build_seed(integrator_problem, cfg, layout)
    traj = extract_trajectory(z0, layout)
    z1 = build_seed(integrator_problem, cfg, layout, warm=traj)
    assert np.array_equal(z0, z1)


def test_free_horizon_layout_and_bounds():
    problem, _ = rayleigh()
    cfg = TranscriptionConfig(n_intervals=10, t_f_guess=4.0)
    spec = goal_attainment_spec(0.9, np.zeros(2))
    nlp, layout = transcribe(problem, cfg, spec)
    assert layout.tf_index == 11 * 4
    assert layout.alpha_index == layout.tf_index + 1
    assert layout.dim == 11 * 4 + 2
    assert nlp.bounds[layout.tf_index, 1] == 5.0
    assert nlp.bounds[layout.alpha_index, 0] == 0.0
    z0 = build_seed(problem, cfg, layout)
    assert z0[layout.tf_index] == 4.0
    # seed keeps attainment rows feasible
    assert np.all(nlp.ineq(z0) <= 1e-12)


def test_delay_indexing_is_exact_lookup():
    # delayed argument at node k must be the stored node value, bitwise
    seen = {}

    def dyn(x, xd, u, ud, t):
        seen[float(np.atleast_1d(t)[0]) if np.ndim(t) else float(t)] = np.array(xd, copy=True)
        return np.stack([0.0 * x[0]])

    problem = ControlProblem(
        n=1, m=0, r=2,
        dynamics=dyn,
        objectives=(lambda xf, tf: xf[0], lambda xf, tf: -xf[0]),
        horizon=FixedHorizon(1.0),
        control_bounds=np.zeros((0, 2)),
        initial_state=np.array([0.3]),
        state_delay=0.25,
        state_history=lambda t: np.array([-1.0]),
    )
    cfg = TranscriptionConfig(n_intervals=8)  # h = 0.125, offset 2
    nlp, layout = transcribe(problem, cfg)
    rng = np.random.default_rng(7)
    z = rng.standard_normal(layout.dim)
    nlp.eq(z)
    states = layout.states(z)
    for k in range(9):
        t_k = k * 0.125
        if k >= 2:
            assert seen[t_k][0] == states[k - 2, 0]
        else:
            assert seen[t_k][0] == -1.0


def test_adjoint_free_terminal_state_transversality():
    # minimize accumulated u^2 with x1 terminal-free: costate of x1 ends near 0
    problem = ControlProblem(
        n=2, m=1, r=2,
        dynamics=lambda x, xd, u, ud, t: np.stack([u[0], u[0] * u[0]]),
        objectives=(lambda xf, tf: xf[1], lambda xf, tf: -xf[1]),
        horizon=FixedHorizon(1.0),
        control_bounds=np.array([[-2.0, 2.0]]),
        initial_state=np.array([1.0, 0.0]),
        vectorized=True,
    )
    cfg = TranscriptionConfig(n_intervals=20)
    spec = ScalarizationSpec(
        kind=ScalarizationKind.SINGLE_OBJECTIVE, weights=np.array([1.0, 0.0]), objective_index=0
    )
    nlp, layout = transcribe(problem, cfg, spec)
    sol = solve(nlp, OPTS, build_seed(problem, cfg, layout))
    assert sol.status is SolverStatus.SUCCESS
    lam = estimate_adjoints(sol, layout, cfg)
    assert abs(lam[-1, 0]) < 1e-6


def test_adjoints_need_multipliers():
    problem, _ = rayleigh()
    cfg = TranscriptionConfig(n_intervals=10, t_f_guess=4.0)
    nlp, layout = transcribe(problem, cfg)
    from chebfront.nlp import NlpSolution

    fake = NlpSolution(
        z=np.zeros(layout.dim), eq_multipliers=np.zeros(3), ineq_multipliers=np.zeros(0),
        status=SolverStatus.SUCCESS, kkt_residual=0.0, feas_violation=0.0, iterations=1,
        objective=0.0,
    )
    with pytest.raises(ValueError, match="multipliers"):
        estimate_adjoints(fake, layout, cfg)


def test_structured_jacobians_match_fd():
    problem, _ = rayleigh()
    cfg = TranscriptionConfig(n_intervals=5, t_f_guess=3.5)
    spec = goal_attainment_spec(0.6, np.zeros(2))
    nlp, layout = transcribe(problem, cfg, spec)
    rng = np.random.default_rng(3)
    z = rng.uniform(-1.0, 1.0, layout.dim)
    z[layout.tf_index] = 3.0
    z[layout.alpha_index] = 0.4

    J = np.asarray(nlp.eq_jac(z).todense())
    c0 = nlp.eq(z)
    for i in range(0, layout.dim, 3):
        h = 1e-7 * (1 + abs(z[i]))
        zp = z.copy()
        zp[i] += h
        col = (nlp.eq(zp) - c0) / h
        assert np.allclose(J[:, i], col, atol=2e-6)

    Jg = np.asarray(nlp.ineq_jac(z).todense())
    g0 = nlp.ineq(z)
    for i in range(0, layout.dim, 3):
        h = 1e-7 * (1 + abs(z[i]))
        zp = z.copy()
        zp[i] += h
        col = (nlp.ineq(zp) - g0) / h
        assert np.allclose(Jg[:, i], col, atol=2e-6)


def test_lagrangian_hessian_matches_fd():
    problem, _ = rayleigh()
    cfg = TranscriptionConfig(n_intervals=4, t_f_guess=3.5)
    spec = goal_attainment_spec(0.6, np.zeros(2))
    nlp, layout = transcribe(problem, cfg, spec)
    rng = np.random.default_rng(5)
    z = rng.uniform(-1.0, 1.0, layout.dim)
    z[layout.tf_index] = 3.1
    z[layout.alpha_index] = 0.3
    w_eq = rng.standard_normal(nlp.eq(z).size)
    w_in = rng.standard_normal(nlp.ineq(z).size)
    H = np.asarray(nlp.lagrangian_hess(z, w_eq, w_in).todense())
    assert np.allclose(H, H.T, atol=1e-10)

    def lag(v):
        return float(w_eq @ nlp.eq(v) + w_in @ nlp.ineq(v))

    idx = [0, 5, layout.u_offset + 2, layout.tf_index]
    for i in idx:
        for j in idx:
            hi = 1e-5 * (1 + abs(z[i]))
            hj = 1e-5 * (1 + abs(z[j]))
            zpp = z.copy(); zpp[i] += hi; zpp[j] += hj
            zp = z.copy(); zp[i] += hi
            zq = z.copy(); zq[j] += hj
            fd = (lag(zpp) - lag(zp) - lag(zq) + lag(z)) / (hi * hj)
            assert H[i, j] == pytest.approx(fd, abs=5e-3, rel=1e-3)


def test_seed_modes(static_parabolas_problem):
    problem, _ = rayleigh()
    cfg_c = TranscriptionConfig(n_intervals=6, t_f_guess=4.0, seed_mode="constant")
    nlp, layout = transcribe(problem, cfg_c)
    z_const = build_seed(problem, cfg_c, layout)
    X = layout.states(z_const)
    assert np.allclose(X, np.tile([-5.0, -5.0, 0.0], (7, 1)))

    cfg_s = TranscriptionConfig(n_intervals=6, t_f_guess=4.0, seed_mode="simulate")
    z_sim = build_seed(problem, cfg_s, layout)
    assert not np.allclose(layout.states(z_sim), X)  # rollout moves the states

    # free-initial-state problems fall back to zeros
    cfg0 = TranscriptionConfig(n_intervals=4)
    nlp0, layout0 = transcribe(static_parabolas_problem, cfg0)
    assert np.all(layout0.states(build_seed(static_parabolas_problem, cfg0, layout0)) == 0.0)
