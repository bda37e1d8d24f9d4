"""Dense nonlinear programming via an augmented-Lagrangian method.

Solves problems of the form

    min f(z)   s.t.   c(z) = 0,   g(z) <= 0,   lo <= z <= hi,

with a classical multiplier (PHR) augmented Lagrangian: inequalities enter
through squared-hinge terms, bounds are handled by projection inside the
bound-constrained inner solver (a projected quasi-Newton method), and
equality/inequality multipliers are updated between inner solves.  The
returned multipliers are the KKT multipliers of the problem as posed, which
downstream code uses as discrete adjoint estimates.

Derivatives are taken by forward finite differences with a relative step
unless the problem supplies gradient/Jacobian callables.  An optional
central-difference polish tightens stationarity near convergence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_RHO_MAX = 1e12
_STALL_LIMIT = 5


class SolverStatus(Enum):
    SUCCESS = "success"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class NlpProblem:
    """A dense NLP.  Inequalities use the convention g(z) <= 0.

    ``objective_grad``/``eq_jac``/``ineq_jac`` are optional callables; when
    absent the solver falls back to finite differences of the callables
    above.  Jacobians may be dense arrays or scipy sparse matrices with one
    row per constraint.  The ``*_scale`` fields are purely algorithmic
    (internal diagonal scaling); solutions and multipliers are always
    reported for the problem exactly as posed.
    """

    dim: int
    objective: Callable[[np.ndarray], float]
    eq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ineq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    bounds: Optional[np.ndarray] = None  # (dim, 2), +-inf allowed
    objective_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    objective_hess: Optional[Callable[[np.ndarray], object]] = None
    lagrangian_hess: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], object]] = None
    eq_jac: Optional[Callable[[np.ndarray], object]] = None
    ineq_jac: Optional[Callable[[np.ndarray], object]] = None
    x_scale: Optional[np.ndarray] = None
    eq_scale: Optional[np.ndarray] = None
    ineq_scale: Optional[np.ndarray] = None
    f_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.bounds is not None:
            self.bounds = np.asarray(self.bounds, dtype=float).reshape(self.dim, 2)
            if np.any(self.bounds[:, 0] > self.bounds[:, 1]):
                raise ValueError("lower bounds exceed upper bounds")
        if self.f_scale <= 0:
            raise ValueError("f_scale must be positive")


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-8
    tol_feas: float = 1e-8
    max_outer: int = 50
    max_inner: int = 2000
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    fd_step: float = 1e-7  # relative
    central_polish: bool = True
    inner_method: str = "auto"  # auto | newton_cg | lbfgsb
    trace_file: Optional[str] = None

    def __post_init__(self) -> None:
        for name in ("tol_kkt", "tol_feas", "initial_penalty", "fd_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_outer <= 0 or self.max_inner <= 0:
            raise ValueError("iteration limits must be positive")
        if self.inner_method not in ("auto", "newton_cg", "lbfgsb"):
            raise ValueError("inner_method must be auto, newton_cg, or lbfgsb")


@dataclass
class NlpSolution:
    z: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    status: SolverStatus
    kkt_residual: float
    feas_violation: float
    iterations: int
    objective: float
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    feasibility: float
    complementarity: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.stationarity, self.feasibility, self.complementarity) <= self.tol


def fd_gradient(
    fun: Callable[[np.ndarray], float],
    z: np.ndarray,
    step_rel: float,
    central: bool = False,
    f0: Optional[float] = None,
) -> np.ndarray:
    """Finite-difference gradient with per-coordinate relative steps."""
    z = np.asarray(z, dtype=float)
    grad = np.empty(z.size)
    steps = step_rel * (1.0 + np.abs(z))
    if central:
        for i in range(z.size):
            zp = z.copy()
            zm = z.copy()
            zp[i] += steps[i]
            zm[i] -= steps[i]
            grad[i] = (fun(zp) - fun(zm)) / (2.0 * steps[i])
    else:
        if f0 is None:
            f0 = fun(z)
        for i in range(z.size):
            zp = z.copy()
            zp[i] += steps[i]
            grad[i] = (fun(zp) - f0) / steps[i]
    return grad


def fd_jacobian(
    fun: Callable[[np.ndarray], np.ndarray],
    z: np.ndarray,
    step_rel: float,
    central: bool = False,
) -> np.ndarray:
    """Finite-difference Jacobian (rows follow fun's output)."""
    z = np.asarray(z, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(z), dtype=float))
    jac = np.empty((f0.size, z.size))
    steps = step_rel * (1.0 + np.abs(z))
    for i in range(z.size):
        zp = z.copy()
        zp[i] += steps[i]
        if central:
            zm = z.copy()
            zm[i] -= steps[i]
            jac[:, i] = (np.asarray(fun(zp)) - np.asarray(fun(zm))) / (2.0 * steps[i])
        else:
            jac[:, i] = (np.asarray(fun(zp)) - f0) / steps[i]
    return jac


def _as_vector(values, size_hint: Optional[int] = None) -> np.ndarray:
    if values is None:
        return np.zeros(0 if size_hint is None else size_hint)
    return np.atleast_1d(np.asarray(values, dtype=float))


def _scaled_jac(jac, row_scale: np.ndarray, col_scale: np.ndarray):
    """Apply diag(1/row_scale) @ J @ diag(col_scale) for dense or sparse J."""
    if sp.issparse(jac):
        return sp.diags(1.0 / row_scale) @ jac @ sp.diags(col_scale)
    jac = np.atleast_2d(np.asarray(jac, dtype=float))
    return (jac / row_scale[:, None]) * col_scale[None, :]


class _ScaledWorkspace:
    """Evaluation of the problem in internally scaled coordinates.

    zs denotes the scaled decision vector (z = s * zs); constraint rows are
    divided by their row scales and the objective by f_scale.  Multipliers
    handled here are for the scaled rows; `to_raw_multipliers` converts back.
    """

    def __init__(self, problem: NlpProblem, options: SolverOptions):
        self.problem = problem
        self.options = options
        self.s = (
            np.ones(problem.dim)
            if problem.x_scale is None
            else np.asarray(problem.x_scale, dtype=float)
        )
        if np.any(self.s <= 0):
            raise ValueError("x_scale entries must be positive")
        probe = np.zeros(problem.dim)
        self.me = _as_vector(problem.eq(probe)).size if problem.eq is not None else 0
        self.mi = _as_vector(problem.ineq(probe)).size if problem.ineq is not None else 0
        self.ce_scale = (
            np.ones(max(self.me, 1))[: self.me]
            if problem.eq_scale is None
            else np.asarray(problem.eq_scale, dtype=float)
        )
        self.ci_scale = (
            np.ones(max(self.mi, 1))[: self.mi]
            if problem.ineq_scale is None
            else np.asarray(problem.ineq_scale, dtype=float)
        )
        self.fs = problem.f_scale
        if problem.bounds is None:
            self.lb = np.full(problem.dim, -np.inf)
            self.ub = np.full(problem.dim, np.inf)
        else:
            self.lb = problem.bounds[:, 0] / self.s
            self.ub = problem.bounds[:, 1] / self.s
        self.analytic = (
            problem.objective_grad is not None
            and (self.me == 0 or problem.eq_jac is not None)
            and (self.mi == 0 or problem.ineq_jac is not None)
        )
        self.central_fd = False

    # -- raw-space helpers ------------------------------------------------
    def raw(self, zs: np.ndarray) -> np.ndarray:
        return zs * self.s

    def fobj(self, zs: np.ndarray) -> float:
        return float(self.problem.objective(self.raw(zs))) / self.fs

    def ceq(self, zs: np.ndarray) -> np.ndarray:
        if self.me == 0:
            return np.zeros(0)
        return _as_vector(self.problem.eq(self.raw(zs))) / self.ce_scale

    def cineq(self, zs: np.ndarray) -> np.ndarray:
        if self.mi == 0:
            return np.zeros(0)
        return _as_vector(self.problem.ineq(self.raw(zs))) / self.ci_scale

    def grad_f(self, zs: np.ndarray) -> np.ndarray:
        if self.problem.objective_grad is not None:
            g = np.asarray(self.problem.objective_grad(self.raw(zs)), dtype=float)
            return g * self.s / self.fs
        return fd_gradient(self.fobj, zs, self.options.fd_step, central=self.central_fd)

    def jac_eq(self, zs: np.ndarray):
        if self.problem.eq_jac is not None:
            return _scaled_jac(self.problem.eq_jac(self.raw(zs)), self.ce_scale, self.s)
        return fd_jacobian(self.ceq, zs, self.options.fd_step, central=self.central_fd)

    def jac_ineq(self, zs: np.ndarray):
        if self.problem.ineq_jac is not None:
            return _scaled_jac(self.problem.ineq_jac(self.raw(zs)), self.ci_scale, self.s)
        return fd_jacobian(self.cineq, zs, self.options.fd_step, central=self.central_fd)

    def obj_hess(self, zs: np.ndarray):
        """Scaled objective Hessian (csc) or None when not supplied."""
        if self.problem.objective_hess is None:
            return None
        H = self.problem.objective_hess(self.raw(zs))
        if H is None:
            return None
        H = sp.csc_matrix(H)
        return sp.diags(self.s) @ H @ sp.diags(self.s) / self.fs

    def lag_hess(self, zs: np.ndarray, lam_hat: np.ndarray, y: np.ndarray):
        """Scaled multiplier-weighted constraint curvature, or None."""
        if self.problem.lagrangian_hess is None:
            return None
        w_eq = lam_hat / self.ce_scale if self.me else np.zeros(0)
        w_in = y / self.ci_scale if self.mi else np.zeros(0)
        H = self.problem.lagrangian_hess(self.raw(zs), w_eq, w_in)
        if H is None:
            return None
        return sp.diags(self.s) @ sp.csc_matrix(H) @ sp.diags(self.s)

    def to_raw_multipliers(self, lam: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return lam * self.fs / self.ce_scale, mu * self.fs / self.ci_scale

    def from_raw_multipliers(self, lam_raw, mu_raw) -> tuple[np.ndarray, np.ndarray]:
        lam = _as_vector(lam_raw, self.me) * self.ce_scale / self.fs
        mu = _as_vector(mu_raw, self.mi) * self.ci_scale / self.fs
        return lam, mu

    # -- augmented Lagrangian ---------------------------------------------
    def aug_value(self, zs, lam, mu, rho) -> float:
        val = self.fobj(zs)
        if self.me:
            c = self.ceq(zs)
            val += lam @ c + 0.5 * rho * (c @ c)
        if self.mi:
            g = self.cineq(zs)
            y = np.maximum(0.0, mu + rho * g)
            val += (y @ y - mu @ mu) / (2.0 * rho)
        return val

    def aug_value_grad(self, zs, lam, mu, rho) -> tuple[float, np.ndarray]:
        val = self.fobj(zs)
        grad = self.grad_f(zs)
        if self.me:
            c = self.ceq(zs)
            val += lam @ c + 0.5 * rho * (c @ c)
            grad = grad + self.jac_eq(zs).T @ (lam + rho * c)
        if self.mi:
            g = self.cineq(zs)
            y = np.maximum(0.0, mu + rho * g)
            val += (y @ y - mu @ mu) / (2.0 * rho)
            grad = grad + self.jac_ineq(zs).T @ y
        return val, np.asarray(grad).ravel()

    # -- convergence measures ----------------------------------------------
    def feasibility(self, c: np.ndarray, g: np.ndarray) -> float:
        worst = 0.0
        if c.size:
            worst = float(np.max(np.abs(c)))
        if g.size:
            worst = max(worst, float(np.max(np.maximum(0.0, g))))
        return worst

    def lagrangian_grad(self, zs, lam, mu, central: bool) -> np.ndarray:
        prev = self.central_fd
        self.central_fd = prev or central
        try:
            grad = self.grad_f(zs)
            if self.me:
                grad = grad + self.jac_eq(zs).T @ lam
            if self.mi:
                grad = grad + self.jac_ineq(zs).T @ mu
        finally:
            self.central_fd = prev
        return np.asarray(grad).ravel()

    def stationarity(self, zs, lam, mu, central: bool) -> float:
        grad = self.lagrangian_grad(zs, lam, mu, central)
        projected = np.clip(zs - grad, self.lb, self.ub) - zs
        return float(np.max(np.abs(projected))) if projected.size else float(np.max(np.abs(grad)))


def _polish_multipliers(
    ws: _ScaledWorkspace, zs: np.ndarray, mu: np.ndarray
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Least-squares multiplier estimate at a (near-)feasible point.

    Minimizes the free-variable components of grad f + Je^T lam + Ji^T mu
    over lam and the active inequality multipliers; inactive multipliers are
    zero and negative estimates are clamped out and re-solved once.  Returns
    None when no constraints are present.
    """
    if ws.me == 0 and ws.mi == 0:
        return None
    opts = ws.options
    if ws.analytic:
        g = ws.grad_f(zs)
        Je = ws.jac_eq(zs) if ws.me else None
        Ji = ws.jac_ineq(zs) if ws.mi else None
    else:
        g = fd_gradient(ws.fobj, zs, opts.fd_step, central=True)
        Je = fd_jacobian(ws.ceq, zs, opts.fd_step, central=True) if ws.me else None
        Ji = fd_jacobian(ws.cineq, zs, opts.fd_step, central=True) if ws.mi else None
    act = np.zeros(0, dtype=int)
    if ws.mi:
        giv = ws.cineq(zs)
        act = np.where((mu > 1e-12) | (giv >= -100 * opts.tol_feas))[0]
    free = (zs > ws.lb + 1e-9 * (1 + np.abs(zs))) & (zs < ws.ub - 1e-9 * (1 + np.abs(zs)))
    cols = []
    if ws.me:
        cols.append(sp.csr_matrix(Je).T[free])
    if act.size:
        cols.append(sp.csr_matrix(Ji).T[free][:, act])
    if not cols:
        return np.zeros(ws.me), np.zeros(ws.mi)
    A = sp.hstack(cols, format="csr") if len(cols) > 1 else cols[0]
    b = -g[free]
    coef = spla.lsqr(A, b, atol=1e-14, btol=1e-14, iter_lim=10 * (A.shape[1] + 10))[0]
    lam_new = coef[: ws.me]
    mu_new = np.zeros(ws.mi)
    if act.size:
        mu_act = coef[ws.me :]
        if np.any(mu_act < 0):
            keep = np.where(mu_act >= 0)[0]
            cols = []
            if ws.me:
                cols.append(sp.csr_matrix(Je).T[free])
            if keep.size:
                cols.append(sp.csr_matrix(Ji).T[free][:, act[keep]])
            if cols:
                A = sp.hstack(cols, format="csr") if len(cols) > 1 else cols[0]
                coef = spla.lsqr(A, b, atol=1e-14, btol=1e-14, iter_lim=10 * (A.shape[1] + 10))[0]
                lam_new = coef[: ws.me]
                mu_act = np.zeros(act.size)
                if keep.size:
                    mu_act[keep] = np.maximum(0.0, coef[ws.me :])
        mu_new[act] = np.maximum(0.0, mu_act)
    return lam_new, mu_new


_NEWTON_MAX_ITERS = 120


def _inner_newton(ws: _ScaledWorkspace, zs0, lam, mu, rho, pgtol, maxiter) -> np.ndarray:
    """Projected Newton on the augmented Lagrangian with a direct sparse
    factorization of the Gauss-Newton model.

    Model Hessian: rho Je^T Je + rho Jg_act^T Jg_act + objective curvature
    (when the problem supplies it) + tiny damping.  Bounds are handled by an
    epsilon-active set and a projected backtracking line search; collocation
    Jacobians are banded, so the factorization is cheap.
    """
    z = np.clip(np.asarray(zs0, dtype=float), ws.lb, ws.ub)
    dim = z.size
    iters = min(maxiter, _NEWTON_MAX_ITERS)
    nu = 1e-8  # Levenberg-Marquardt damping, persistent across iterations
    for _ in range(iters):
        c = ws.ceq(z)
        g = ws.cineq(z)
        grad = np.asarray(ws.grad_f(z)).ravel()
        fval = ws.fobj(z)
        Je = ws.jac_eq(z) if ws.me else None
        Jg_act = None
        if ws.me:
            lam_hat = lam + rho * c
            grad = grad + np.asarray(Je.T @ lam_hat).ravel()
            fval += float(lam @ c + 0.5 * rho * (c @ c))
        y = np.zeros(ws.mi)
        if ws.mi:
            Jg = ws.jac_ineq(z)
            y = np.maximum(0.0, mu + rho * g)
            grad = grad + np.asarray(Jg.T @ y).ravel()
            fval += float((y @ y - mu @ mu) / (2.0 * rho))
            act = y > 0
            if np.any(act):
                Jg_act = sp.csr_matrix(Jg)[act]

        pg = z - np.clip(z - grad, ws.lb, ws.ub)
        if float(np.max(np.abs(pg), initial=0.0)) <= pgtol:
            break

        eps_act = 1e-10 * (1.0 + np.abs(z))
        fixed = ((z <= ws.lb + eps_act) & (grad > 0)) | ((z >= ws.ub - eps_act) & (grad < 0))
        free = np.where(~fixed)[0]
        if free.size == 0:
            break
        gf = grad[free]

        H = None
        if Je is not None:
            Jec = sp.csc_matrix(Je)
            H = rho * (Jec.T @ Jec)
        if Jg_act is not None:
            Jgc = sp.csc_matrix(Jg_act)
            Hg = rho * (Jgc.T @ Jgc)
            H = Hg if H is None else H + Hg
        Hf = ws.obj_hess(z)
        if Hf is not None:
            H = Hf if H is None else H + Hf
        Hl = ws.lag_hess(z, lam_hat if ws.me else np.zeros(0), y)
        if Hl is not None:
            H = Hl if H is None else H + Hl
        if H is None:
            H = sp.csc_matrix((dim, dim))
        H = sp.csc_matrix(H)
        diag_ref = max(1.0, float(np.max(np.abs(H.diagonal()), initial=0.0)))
        Hff_base = H[free][:, free]
        eye_f = sp.identity(free.size, format="csc")

        # Levenberg-Marquardt loop: damp until a step passes the Armijo test
        accepted = False
        z_new = z
        for _lm in range(30):
            Hff = Hff_base + (nu * diag_ref) * eye_f
            try:
                p_free = spla.splu(Hff).solve(-gf)
            except RuntimeError:
                p_free = -gf / np.maximum(Hff.diagonal(), nu * diag_ref)
            p = np.zeros(dim)
            p[free] = p_free
            z_try = np.clip(z + p, ws.lb, ws.ub)
            d = z_try - z
            slope = float(grad @ d)
            if slope < 0:
                f_try = ws.aug_value(z_try, lam, mu, rho)
                if f_try <= fval + 1e-4 * slope:
                    accepted = True
                    z_new = z_try
                    nu = max(1e-12, nu / 3.0)
                    break
            nu = min(1e8, nu * 4.0)
            if nu >= 1e8:
                break
        if not accepted:
            # projected steepest-descent fallback
            alpha = 1.0 / max(1.0, diag_ref)
            improved = False
            for _ls in range(40):
                z_try = np.clip(z - alpha * grad, ws.lb, ws.ub)
                if ws.aug_value(z_try, lam, mu, rho) < fval:
                    improved = True
                    z_new = z_try
                    break
                alpha *= 0.5
            if not improved:
                break
        z = z_new
    return z


def _inner_solve(ws: _ScaledWorkspace, zs0, lam, mu, rho, pgtol, central) -> np.ndarray:
    method = ws.options.inner_method
    if method == "auto":
        method = "newton_cg" if (ws.analytic or ws.problem.dim <= 500) else "lbfgsb"
    if method == "newton_cg":
        return _inner_newton(ws, zs0, lam, mu, rho, pgtol, ws.options.max_inner)
    if ws.analytic:
        fun = lambda v: ws.aug_value_grad(v, lam, mu, rho)
        jac = True
    else:
        fun = lambda v: ws.aug_value(v, lam, mu, rho)
        jac = lambda v: fd_gradient(
            lambda u: ws.aug_value(u, lam, mu, rho), v, ws.options.fd_step, central=central
        )
    res = scipy.optimize.minimize(
        fun,
        zs0,
        jac=jac,
        method="L-BFGS-B",
        bounds=list(zip(ws.lb, ws.ub)),
        options={
            "maxiter": ws.options.max_inner,
            "maxfun": 3 * ws.options.max_inner,
            "ftol": 1e-16,
            "gtol": pgtol,
            "maxcor": 20,
        },
    )
    return np.asarray(res.x, dtype=float)


def solve(
    problem: NlpProblem,
    options: Optional[SolverOptions] = None,
    warm_start: Optional[NlpSolution | np.ndarray | Sequence[float]] = None,
) -> NlpSolution:
    """Augmented-Lagrangian solve.

    ``warm_start`` may be a previous :class:`NlpSolution` (primal and dual
    restart) or a plain vector used as the initial point.  Without one, the
    initial point is the midpoint of the bounds (zero where unbounded).
    Deterministic: identical inputs produce identical output.
    """
    options = options or SolverOptions()
    ws = _ScaledWorkspace(problem, options)

    if isinstance(warm_start, NlpSolution):
        zs = warm_start.z / ws.s
        lam, mu = ws.from_raw_multipliers(warm_start.eq_multipliers, warm_start.ineq_multipliers)
    elif warm_start is not None:
        zs = np.asarray(warm_start, dtype=float) / ws.s
        lam, mu = np.zeros(ws.me), np.zeros(ws.mi)
    else:
        lo = np.where(np.isfinite(ws.lb), ws.lb, 0.0)
        hi = np.where(np.isfinite(ws.ub), ws.ub, lo)
        zs = 0.5 * (lo + hi)
        lam, mu = np.zeros(ws.me), np.zeros(ws.mi)
    zs = np.clip(zs, ws.lb, ws.ub)

    rho = options.initial_penalty
    trace: list[tuple[int, float, float, float]] = []
    best = None
    feas_prev = np.inf
    kkt_prev = np.inf
    stall = 0
    dual_stall = 0
    status = SolverStatus.MAX_ITER
    use_central = False
    outer = 0

    for outer in range(1, options.max_outer + 1):
        pgtol = max(0.1 * options.tol_kkt, min(1e-2, 0.1 * feas_prev))
        zs = _inner_solve(ws, zs, lam, mu, rho, pgtol, use_central)
        c = ws.ceq(zs)
        g = ws.cineq(zs)
        feas = ws.feasibility(c, g)
        lam_new = lam + rho * c
        mu_new = np.maximum(0.0, mu + rho * g)
        stat = ws.stationarity(zs, lam_new, mu_new, use_central)
        compl = float(np.max(np.abs(mu_new * g))) if g.size else 0.0
        kkt = max(stat, compl)

        if (
            feas <= options.tol_feas
            and kkt <= options.tol_kkt
            and not ws.analytic
            and options.central_polish
            and not use_central
        ):
            # forward differences can cancel the true gradient; re-measure
            # with central differences before accepting convergence
            stat = ws.stationarity(zs, lam_new, mu_new, central=True)
            kkt = max(stat, compl)
            if kkt > options.tol_kkt:
                use_central = True
                ws.central_fd = True

        if feas <= options.tol_feas and kkt > options.tol_kkt:
            # first-order multiplier polish: the accumulated AL multipliers
            # carry penalty noise that a least-squares estimate removes
            polished = _polish_multipliers(ws, zs, mu_new)
            if polished is not None:
                lam_p, mu_p = polished
                stat_p = ws.stationarity(zs, lam_p, mu_p, use_central)
                compl_p = float(np.max(np.abs(mu_p * g))) if g.size else 0.0
                if max(stat_p, compl_p) < kkt:
                    lam_new, mu_new = lam_p, mu_p
                    stat, compl = stat_p, compl_p
                    kkt = max(stat, compl)

        trace.append((outer, float(problem.objective(ws.raw(zs))), feas, kkt))
        # best-so-far: feasible beats infeasible, then lower KKT, then lower violation
        cand_key = (feas > options.tol_feas, kkt if feas <= options.tol_feas else np.inf, feas)
        if best is None or cand_key < best[0]:
            best = (cand_key, zs.copy(), feas, kkt, lam_new.copy(), mu_new.copy())

        if feas <= options.tol_feas and kkt <= options.tol_kkt:
            lam, mu = lam_new, mu_new
            status = SolverStatus.SUCCESS
            break
        if feas <= options.tol_feas:
            dual_stall = dual_stall + 1 if kkt >= 0.9 * kkt_prev else 0
            if dual_stall >= _STALL_LIMIT:
                break  # dual progress exhausted; report best found
            kkt_prev = min(kkt_prev, kkt)
        if (
            options.central_polish
            and not ws.analytic
            and not use_central
            and feas <= 10 * options.tol_feas
            and stat <= max(1e-4, 100 * options.tol_kkt)
        ):
            use_central = True
            ws.central_fd = True

        lam, mu = lam_new, mu_new
        if feas > options.tol_feas:
            if feas > 0.25 * feas_prev:
                if rho >= _RHO_MAX and feas >= 0.9 * min(feas_prev, best[2]):
                    stall += 1
                    if stall >= _STALL_LIMIT:
                        status = SolverStatus.INFEASIBLE
                        break
                rho = min(rho * options.penalty_growth, _RHO_MAX)
            else:
                stall = 0
        feas_prev = min(feas_prev, feas)

    if status is not SolverStatus.SUCCESS and best is not None:
        _, zs, feas, kkt, lam, mu = best
    else:
        feas = trace[-1][2]
        kkt = trace[-1][3]

    lam_raw, mu_raw = ws.to_raw_multipliers(lam, mu)
    solution = NlpSolution(
        z=ws.raw(zs),
        eq_multipliers=lam_raw,
        ineq_multipliers=mu_raw,
        status=status,
        kkt_residual=kkt,
        feas_violation=feas,
        iterations=outer,
        objective=float(problem.objective(ws.raw(zs))),
        trace=trace,
    )
    if options.trace_file:
        _dump_trace(options.trace_file, trace)
    return solution


def _dump_trace(path: str, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "feas_violation", "kkt_residual"])
        for row in trace:
            writer.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}"])


def kkt_check(problem: NlpProblem, solution: NlpSolution, tol: float) -> KktReport:
    """Recompute stationarity / feasibility / complementarity residuals."""
    options = SolverOptions(tol_kkt=tol, tol_feas=tol)
    ws = _ScaledWorkspace(problem, options)
    zs = solution.z / ws.s
    lam, mu = ws.from_raw_multipliers(solution.eq_multipliers, solution.ineq_multipliers)
    c = ws.ceq(zs)
    g = ws.cineq(zs)
    stat = ws.stationarity(zs, lam, mu, central=True)
    feas = ws.feasibility(c, g)
    compl = float(np.max(np.abs(mu * g))) if g.size else 0.0
    return KktReport(stationarity=stat, feasibility=feas, complementarity=compl, tol=tol)
