"""Direct collocation: ControlProblem -> finite-dimensional NLP.

Euler or trapezoidal defects on a uniform mesh.  Time delays are resolved by
exact integer node shifts (the delay must divide the mesh step); delayed
times before zero read the history functions.  A free horizon adds t_f as a
decision variable entering every defect through h = t_f/N and is incompatible
with delays (d/h would stop being integral while t_f moves).

The transcribed NLP carries gradient/Jacobian callables assembled by the
chain rule through the scheme from vectorized finite differences of the
user's dynamics/constraint callables, so the NLP solver never needs dense
objective-level differencing on the (N+1)(n+m)-dimensional decision vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.sparse as sp

from chebfront.core import (
    ControlProblem,
    FixedHorizon,
    FreeHorizon,
    Trajectory,
    delay_offset,
    simulate,
)
from chebfront.nlp import NlpProblem, NlpSolution

if TYPE_CHECKING:  # pragma: no cover
    from chebfront.scalarize import ScalarizationSpec

_FD = 1e-7  # relative step for structured derivative assembly
_HESS_FD = 1e-4  # wider relative step for second differences
_TF_LOWER_FRAC = 1e-3


class ConfigurationError(ValueError):
    """Transcription configuration incompatible with the problem."""


class Scheme(Enum):
    EULER = "euler"
    TRAPEZOIDAL = "trapezoidal"


@dataclass(frozen=True)
class TranscriptionConfig:
    n_intervals: int
    scheme: Scheme = Scheme.TRAPEZOIDAL
    t_f_guess: Optional[float] = None  # used when the horizon is free
    seed_mode: str = "constant"  # "constant" | "simulate"

    def __post_init__(self) -> None:
        if self.n_intervals < 2:
            raise ConfigurationError("need at least 2 mesh intervals")
        if self.seed_mode not in ("constant", "simulate"):
            raise ConfigurationError("seed_mode must be 'constant' or 'simulate'")


@dataclass
class NlpLayout:
    """Index bookkeeping for the transcribed decision vector and constraints.

    Decision vector: states x_0..x_N (n each), then controls u_0..u_N
    (m each), then optionally t_f, then optionally the attainment level.
    """

    n: int
    m: int
    n_intervals: int
    scheme: Scheme
    dim: int
    u_offset: int
    tf_index: Optional[int]
    alpha_index: Optional[int]
    t_f_fixed: Optional[float]
    n_defect_rows: int
    n_boundary_eq: int
    ineq_blocks: dict[str, tuple[int, int]] = field(default_factory=dict)

    def x_index(self, k: int, i: int) -> int:
        return k * self.n + i

    def u_index(self, k: int, j: int) -> int:
        return self.u_offset + k * self.m + j

    def states(self, z: np.ndarray) -> np.ndarray:
        return z[: self.u_offset].reshape(self.n_intervals + 1, self.n)

    def controls(self, z: np.ndarray) -> np.ndarray:
        count = (self.n_intervals + 1) * self.m
        return z[self.u_offset : self.u_offset + count].reshape(self.n_intervals + 1, self.m)

    def horizon_of(self, z: np.ndarray) -> float:
        if self.tf_index is None:
            return float(self.t_f_fixed)
        return float(z[self.tf_index])

    def alpha_of(self, z: np.ndarray) -> Optional[float]:
        return None if self.alpha_index is None else float(z[self.alpha_index])

    def times(self, t_f: float) -> np.ndarray:
        return np.linspace(0.0, t_f, self.n_intervals + 1)


def _block_pattern(ks: np.ndarray, col_ks: np.ndarray, n: int, ncols: int, col_base: int, col_stride: int):
    """(rows, cols) for dense (len(ks), n, ncols) blocks at defect rows ks."""
    rows = (ks[:, None, None] * n + np.arange(n)[None, :, None] + np.zeros(ncols, dtype=int)[None, None, :]).ravel()
    cols = (
        col_base
        + col_ks[:, None, None] * col_stride
        + np.zeros(n, dtype=int)[None, :, None]
        + np.arange(ncols)[None, None, :]
    ).ravel()
    return rows, cols


class _TranscribedOcp:
    """Callable bundle evaluating the transcribed NLP and its derivatives."""

    def __init__(self, problem: ControlProblem, config: TranscriptionConfig, scalarization):
        self.p = problem
        self.config = config
        self.scal = scalarization
        self.N = config.n_intervals
        self.n = problem.n
        self.m = problem.m
        n, m, N = self.n, self.m, self.N

        self.free_tf = isinstance(problem.horizon, FreeHorizon)
        if self.free_tf:
            self.t_f_max = problem.horizon.t_f_max
            self.t_f_fixed = None
            if problem.has_delays:
                raise ConfigurationError("time delays are unsupported with a free horizon")
        else:
            self.t_f_fixed = problem.horizon.t_f

        h_ref = (self.t_f_fixed if not self.free_tf else 1.0) / N
        try:
            self.off_x = delay_offset(problem.state_delay, h_ref, "state delay") if not self.free_tf else 0
            delays = problem.control_delays if problem.control_delays is not None else np.zeros(m)
            self.off_u = (
                [delay_offset(d, h_ref, "control delay") for d in delays] if not self.free_tf else [0] * m
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

        self.kind = None
        self.weights = None
        self.utopia = None
        self.offsets = np.zeros(problem.r)
        self.goal_rows = 0
        if scalarization is not None:
            self.kind = scalarization.kind.value
            self.weights = np.asarray(scalarization.weights, dtype=float)
            if scalarization.offsets is not None:
                self.offsets = np.asarray(scalarization.offsets, dtype=float)
            if self.kind == "goal_attainment":
                if scalarization.utopia is None or len(scalarization.utopia) != problem.r:
                    raise ConfigurationError("goal attainment needs an r-entry utopia vector")
                self.utopia = np.asarray(scalarization.utopia, dtype=float)
                self.goal_rows = problem.r
            self.obj_index = getattr(scalarization, "objective_index", None)

        self.u_offset = (N + 1) * n
        dim = (N + 1) * (n + m)
        self.tf_index = dim if self.free_tf else None
        if self.free_tf:
            dim += 1
        self.alpha_index = dim if self.goal_rows else None
        if self.goal_rows:
            dim += 1
        self.dim = dim

        # constraint row counts (probe user callables once)
        zeros_x, zeros_u = np.zeros(n), np.zeros(m)
        t_probe = self.t_f_fixed if not self.free_tf else (config.t_f_guess or self.t_f_max)
        self.p1 = (
            np.atleast_1d(np.asarray(problem.boundary_eq(zeros_x, zeros_x, t_probe))).size
            if problem.boundary_eq is not None
            else 0
        )
        self.p2 = (
            np.atleast_1d(np.asarray(problem.boundary_ineq(zeros_x, zeros_x, t_probe))).size
            if problem.boundary_ineq is not None
            else 0
        )
        self.p3 = (
            np.atleast_1d(np.asarray(problem.path_constraint(zeros_x, zeros_u, 0.0))).size
            if problem.path_constraint is not None
            else 0
        )
        self.p4 = (
            np.atleast_1d(np.asarray(problem.state_constraint(zeros_x, 0.0))).size
            if problem.state_constraint is not None
            else 0
        )

        self._build_defect_patterns()
        self.layout = self._build_layout()

    # ------------------------------------------------------------------
    def _build_layout(self) -> NlpLayout:
        blocks: dict[str, tuple[int, int]] = {}
        at = 0
        if self.p2:
            blocks["boundary_ineq"] = (at, self.p2)
            at += self.p2
        if self.p3:
            blocks["path"] = (at, (self.N + 1) * self.p3)
            at += (self.N + 1) * self.p3
        if self.p4:
            blocks["state"] = (at, (self.N + 1) * self.p4)
            at += (self.N + 1) * self.p4
        if self.goal_rows:
            blocks["goal"] = (at, self.goal_rows)
            at += self.goal_rows
        return NlpLayout(
            n=self.n,
            m=self.m,
            n_intervals=self.N,
            scheme=self.config.scheme,
            dim=self.dim,
            u_offset=self.u_offset,
            tf_index=self.tf_index,
            alpha_index=self.alpha_index,
            t_f_fixed=self.t_f_fixed,
            n_defect_rows=self.N * self.n,
            n_boundary_eq=self.p1,
            ineq_blocks=blocks,
        )

    # ------------------------------------------------------------------
    # unpacking and delayed-argument tables
    def _unpack(self, z: np.ndarray):
        N, n, m = self.N, self.n, self.m
        X = z[: (N + 1) * n].reshape(N + 1, n)
        U = z[self.u_offset : self.u_offset + (N + 1) * m].reshape(N + 1, m)
        t_f = float(z[self.tf_index]) if self.free_tf else self.t_f_fixed
        return X, U, t_f

    def _times(self, t_f: float) -> np.ndarray:
        return np.linspace(0.0, t_f, self.N + 1)

    def _delayed_tables(self, X: np.ndarray, U: np.ndarray, times: np.ndarray):
        p = self.p
        if self.off_x:
            Xdel = np.empty_like(X)
            Xdel[self.off_x :] = X[: X.shape[0] - self.off_x]
            for k in range(self.off_x):
                Xdel[k] = np.asarray(p.state_history(times[k] - p.state_delay), dtype=float)
        else:
            Xdel = X
        if self.m and any(self.off_u):
            Udel = U.copy()
            for j, off in enumerate(self.off_u):
                if off == 0:
                    continue
                Udel[off:, j] = U[: U.shape[0] - off, j]
                d = p.control_delays[j]
                for k in range(off):
                    hist = np.atleast_1d(np.asarray(p.control_history(times[k] - d), dtype=float))
                    Udel[k, j] = hist[j] if hist.size > 1 else hist[0]
        else:
            Udel = U
        return Xdel, Udel

    def _dyn_batch(self, X, Xdel, U, Udel, times) -> np.ndarray:
        """Dynamics at every node, returned as (N+1, n)."""
        p = self.p
        if p.vectorized:
            out = np.asarray(p.dynamics(X.T, Xdel.T, U.T, Udel.T, times), dtype=float)
            return out.T if out.shape == (self.n, self.N + 1) else out.reshape(self.N + 1, self.n)
        F = np.empty((self.N + 1, self.n))
        for k in range(self.N + 1):
            F[k] = np.asarray(p.dynamics(X[k], Xdel[k], U[k], Udel[k], times[k]), dtype=float)
        return F

    # ------------------------------------------------------------------
    # constraint / objective values
    def defects(self, z: np.ndarray) -> np.ndarray:
        X, U, t_f = self._unpack(z)
        times = self._times(t_f)
        h = t_f / self.N
        Xdel, Udel = self._delayed_tables(X, U, times)
        F = self._dyn_batch(X, Xdel, U, Udel, times)
        if self.config.scheme is Scheme.TRAPEZOIDAL:
            D = X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])
        else:
            D = X[1:] - X[:-1] - h * F[:-1]
        return D.ravel()

    def eq(self, z: np.ndarray) -> np.ndarray:
        parts = [self.defects(z)]
        if self.p1:
            X, _, t_f = self._unpack(z)
            parts.append(
                np.atleast_1d(np.asarray(self.p.boundary_eq(X[0], X[-1], t_f), dtype=float))
            )
        return np.concatenate(parts) if len(parts) > 1 else parts[0]

    def _phi_tilde(self, x_f: np.ndarray, t_f: float) -> np.ndarray:
        return np.array(
            [float(phi(x_f, t_f)) + self.offsets[i] for i, phi in enumerate(self.p.objectives)]
        )

    def ineq(self, z: np.ndarray) -> np.ndarray:
        X, U, t_f = self._unpack(z)
        times = self._times(t_f)
        parts = []
        if self.p2:
            parts.append(
                np.atleast_1d(np.asarray(self.p.boundary_ineq(X[0], X[-1], t_f), dtype=float))
            )
        if self.p3:
            parts.append(self._path_values(self.p.path_constraint, X, U, times, self.p3))
        if self.p4:
            parts.append(self._state_values(X, times))
        if self.goal_rows:
            phi = self._phi_tilde(X[-1], t_f)
            alpha = float(z[self.alpha_index])
            parts.append(self.weights * (phi - self.utopia) - alpha)
        return np.concatenate(parts) if parts else np.zeros(0)

    def _path_values(self, fun, X, U, times, rows) -> np.ndarray:
        if self.p.vectorized:
            vals = np.asarray(fun(X.T, U.T, times), dtype=float)
            vals = vals.reshape(rows, self.N + 1)
            return vals.T.ravel()
        out = np.empty((self.N + 1, rows))
        for k in range(self.N + 1):
            out[k] = np.atleast_1d(np.asarray(fun(X[k], U[k], times[k]), dtype=float))
        return out.ravel()

    def _state_values(self, X, times) -> np.ndarray:
        fun = self.p.state_constraint
        if self.p.vectorized:
            vals = np.asarray(fun(X.T, times), dtype=float).reshape(self.p4, self.N + 1)
            return vals.T.ravel()
        out = np.empty((self.N + 1, self.p4))
        for k in range(self.N + 1):
            out[k] = np.atleast_1d(np.asarray(fun(X[k], times[k]), dtype=float))
        return out.ravel()

    def objective(self, z: np.ndarray) -> float:
        if self.kind == "goal_attainment":
            return float(z[self.alpha_index])
        X, _, t_f = self._unpack(z)
        phi = self._phi_tilde(X[-1], t_f)
        if self.kind == "weighted_sum":
            return float(self.weights @ phi)
        if self.kind == "single_objective":
            return float(phi[self.obj_index])
        return 0.0  # pure feasibility problem

    # ------------------------------------------------------------------
    # derivative assembly
    def _build_defect_patterns(self) -> None:
        n, m, N = self.n, self.m, self.N
        trap = self.config.scheme is Scheme.TRAPEZOIDAL
        kk = np.arange(N)
        rows_parts, cols_parts = [], []

        def add(ks, col_ks, ncols, col_base, stride):
            r, c = _block_pattern(ks, col_ks, n, ncols, col_base, stride)
            rows_parts.append(r)
            cols_parts.append(c)

        # identity terms: +I at x_{k+1}, -I at x_k
        eye_rows = (kk[:, None] * n + np.arange(n)[None, :]).ravel()
        rows_parts.append(eye_rows)
        cols_parts.append(((kk + 1)[:, None] * n + np.arange(n)[None, :]).ravel())
        rows_parts.append(eye_rows)
        cols_parts.append((kk[:, None] * n + np.arange(n)[None, :]).ravel())

        # dynamics blocks; delayed-slot sensitivities are always assembled
        # (zero offset lands on the same columns and duplicate entries sum)
        add(kk, kk, n, 0, n)  # A_k at x_k
        if trap:
            add(kk, kk + 1, n, 0, n)  # A_{k+1} at x_{k+1}
        self._adel_lo_ks = kk[kk >= self.off_x]
        add(self._adel_lo_ks, self._adel_lo_ks - self.off_x, n, 0, n)
        self._adel_hi_ks = None
        if trap:
            self._adel_hi_ks = kk[kk + 1 >= self.off_x]
            add(self._adel_hi_ks, self._adel_hi_ks + 1 - self.off_x, n, 0, n)
        self._bdel_ks = []
        if m:
            add(kk, kk, m, self.u_offset, m)  # B_k at u_k
            if trap:
                add(kk, kk + 1, m, self.u_offset, m)
            for j, off in enumerate(self.off_u):
                ks = kk[kk >= off]
                add(ks, ks - off, 1, self.u_offset + j, m)
                hi = None
                if trap:
                    ks1 = kk[kk + 1 >= off]
                    add(ks1, ks1 + 1 - off, 1, self.u_offset + j, m)
                    hi = ks1
                self._bdel_ks.append((j, ks, hi))
        if self.free_tf:
            rows_parts.append((kk[:, None] * n + np.arange(n)[None, :]).ravel())
            cols_parts.append(np.full(N * n, self.tf_index))

        self._defect_rows_idx = np.concatenate(rows_parts)
        self._defect_cols_idx = np.concatenate(cols_parts)

    def _dyn_jacobians(self, X, Xdel, U, Udel, times, F):
        """Per-node dynamics sensitivities by vectorized forward differences."""
        N1, n, m = self.N + 1, self.n, self.m
        A = np.empty((N1, n, n))
        Ad = np.empty((N1, n, n))
        B = np.empty((N1, n, m)) if m else None
        Bd = np.empty((N1, n, m)) if m else None
        for i in range(n):
            steps = _FD * (1.0 + np.abs(X[:, i]))
            Xp = X.copy()
            Xp[:, i] += steps
            A[:, :, i] = (self._dyn_batch(Xp, Xdel, U, Udel, times) - F) / steps[:, None]
            steps = _FD * (1.0 + np.abs(Xdel[:, i]))
            Xq = Xdel.copy()
            Xq[:, i] += steps
            Ad[:, :, i] = (self._dyn_batch(X, Xq, U, Udel, times) - F) / steps[:, None]
        for j in range(m):
            steps = _FD * (1.0 + np.abs(U[:, j]))
            Up = U.copy()
            Up[:, j] += steps
            B[:, :, j] = (self._dyn_batch(X, Xdel, Up, Udel, times) - F) / steps[:, None]
            steps = _FD * (1.0 + np.abs(Udel[:, j]))
            Uq = Udel.copy()
            Uq[:, j] += steps
            Bd[:, :, j] = (self._dyn_batch(X, Xdel, U, Uq, times) - F) / steps[:, None]
        Ft = None
        if self.free_tf:
            step = _FD * (1.0 + times[-1])
            Ft = (self._dyn_batch(X, Xdel, U, Udel, times + step) - F) / step
        return A, Ad, B, Bd, Ft

    def defect_jacobian(self, z: np.ndarray) -> sp.csr_matrix:
        X, U, t_f = self._unpack(z)
        times = self._times(t_f)
        h = t_f / self.N
        Xdel, Udel = self._delayed_tables(X, U, times)
        F = self._dyn_batch(X, Xdel, U, Udel, times)
        A, Ad, B, Bd, Ft = self._dyn_jacobians(X, Xdel, U, Udel, times, F)
        N, n, m = self.N, self.n, self.m
        trap = self.config.scheme is Scheme.TRAPEZOIDAL
        ch = 0.5 * h if trap else h
        vals = [np.ones(N * n), -np.ones(N * n)]
        vals.append((-ch * A[:N]).ravel())
        if trap:
            vals.append((-ch * A[1:]).ravel())
        vals.append((-ch * Ad[self._adel_lo_ks]).ravel())
        if trap:
            vals.append((-ch * Ad[self._adel_hi_ks + 1]).ravel())
        if m:
            vals.append((-ch * B[:N]).ravel())
            if trap:
                vals.append((-ch * B[1:]).ravel())
            for j, lo, hi in self._bdel_ks:
                vals.append((-ch * Bd[lo, :, j]).ravel())
                if trap and hi is not None:
                    vals.append((-ch * Bd[hi + 1, :, j]).ravel())
        if self.free_tf:
            kk = np.arange(N)
            if trap:
                base = -(F[:N] + F[1:]) / (2.0 * N)
                timed = -ch * (Ft[:N] * (kk / N)[:, None] + Ft[1:] * ((kk + 1) / N)[:, None])
            else:
                base = -F[:N] / N
                timed = -ch * Ft[:N] * (kk / N)[:, None]
            vals.append((base + timed).ravel())
        data = np.concatenate(vals)
        return sp.csr_matrix(
            (data, (self._defect_rows_idx, self._defect_cols_idx)), shape=(N * n, self.dim)
        )

    def _terminal_fd(self, fun, x_f: np.ndarray, t_f: float):
        """Central-difference gradient of fun(x_f, t_f) w.r.t. (x_f, t_f)."""
        g_x = np.empty(self.n)
        for i in range(self.n):
            step = _FD * (1.0 + abs(x_f[i]))
            xp, xm = x_f.copy(), x_f.copy()
            xp[i] += step
            xm[i] -= step
            g_x[i] = (fun(xp, t_f) - fun(xm, t_f)) / (2 * step)
        step = _FD * (1.0 + abs(t_f))
        g_t = (fun(x_f, t_f + step) - fun(x_f, t_f - step)) / (2 * step)
        return g_x, float(g_t)

    def _boundary_jac(self, fun, rows: int, X, t_f: float) -> np.ndarray:
        """Jacobian of theta(x0, xf, t_f) rows w.r.t. the decision vector."""
        jac = np.zeros((rows, self.dim))
        x0, xf = X[0].copy(), X[-1].copy()
        for i in range(self.n):
            step = _FD * (1.0 + abs(x0[i]))
            xp, xm = x0.copy(), x0.copy()
            xp[i] += step
            xm[i] -= step
            jac[:, i] = (
                np.atleast_1d(fun(xp, xf, t_f)) - np.atleast_1d(fun(xm, xf, t_f))
            ) / (2 * step)
            step = _FD * (1.0 + abs(xf[i]))
            xp, xm = xf.copy(), xf.copy()
            xp[i] += step
            xm[i] -= step
            jac[:, self.N * self.n + i] = (
                np.atleast_1d(fun(x0, xp, t_f)) - np.atleast_1d(fun(x0, xm, t_f))
            ) / (2 * step)
        if self.free_tf:
            step = _FD * (1.0 + abs(t_f))
            jac[:, self.tf_index] = (
                np.atleast_1d(fun(x0, xf, t_f + step)) - np.atleast_1d(fun(x0, xf, t_f - step))
            ) / (2 * step)
        return jac

    def eq_jac(self, z: np.ndarray) -> sp.csr_matrix:
        J = self.defect_jacobian(z)
        if self.p1:
            X, _, t_f = self._unpack(z)
            Jb = self._boundary_jac(self.p.boundary_eq, self.p1, X, t_f)
            J = sp.vstack([J, sp.csr_matrix(Jb)], format="csr")
        return J

    def _path_jac(self, fun, rows_per_node: int, X, U, times, with_u: bool) -> sp.csr_matrix:
        """Block-diagonal Jacobian of per-node path rows (node-major)."""
        N1, n, m = self.N + 1, self.n, self.m

        def batch(Xa, Ua, ts):
            if with_u:
                return self._path_values(fun, Xa, Ua, ts, rows_per_node).reshape(N1, rows_per_node)
            return self._state_values(Xa, ts).reshape(N1, rows_per_node)

        base = batch(X, U, times)
        rows_idx, cols_idx, vals = [], [], []
        node_rows = np.arange(N1)[:, None] * rows_per_node + np.arange(rows_per_node)[None, :]
        for i in range(n):
            steps = _FD * (1.0 + np.abs(X[:, i]))
            Xp = X.copy()
            Xp[:, i] += steps
            dv = (batch(Xp, U, times) - base) / steps[:, None]
            rows_idx.append(node_rows.ravel())
            cols_idx.append((np.arange(N1)[:, None] * n + i + np.zeros(rows_per_node, dtype=int)[None, :]).ravel())
            vals.append(dv.ravel())
        if with_u:
            for j in range(m):
                steps = _FD * (1.0 + np.abs(U[:, j]))
                Up = U.copy()
                Up[:, j] += steps
                dv = (batch(X, Up, times) - base) / steps[:, None]
                rows_idx.append(node_rows.ravel())
                cols_idx.append(
                    (self.u_offset + np.arange(N1)[:, None] * m + j + np.zeros(rows_per_node, dtype=int)[None, :]).ravel()
                )
                vals.append(dv.ravel())
        if self.free_tf:
            # t_k = (k/N) t_f, so a t_f perturbation scales the grid times
            step = _FD * (1.0 + times[-1])
            dv = (batch(X, U, times * (1.0 + step / times[-1])) - base) / step
            rows_idx.append(node_rows.ravel())
            cols_idx.append(np.full(N1 * rows_per_node, self.tf_index))
            vals.append(dv.ravel())
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
            shape=(N1 * rows_per_node, self.dim),
        )

    def ineq_jac(self, z: np.ndarray) -> sp.csr_matrix:
        X, U, t_f = self._unpack(z)
        times = self._times(t_f)
        blocks = []
        if self.p2:
            blocks.append(sp.csr_matrix(self._boundary_jac(self.p.boundary_ineq, self.p2, X, t_f)))
        if self.p3:
            blocks.append(self._path_jac(self.p.path_constraint, self.p3, X, U, times, with_u=True))
        if self.p4:
            blocks.append(self._path_jac(self.p.state_constraint, self.p4, X, U, times, with_u=False))
        if self.goal_rows:
            Jg = np.zeros((self.goal_rows, self.dim))
            for i, phi in enumerate(self.p.objectives):
                g_x, g_t = self._terminal_fd(phi, X[-1], t_f)
                Jg[i, self.N * self.n : (self.N + 1) * self.n] = self.weights[i] * g_x
                if self.free_tf:
                    Jg[i, self.tf_index] = self.weights[i] * g_t
                Jg[i, self.alpha_index] = -1.0
            blocks.append(sp.csr_matrix(Jg))
        if not blocks:
            return sp.csr_matrix((0, self.dim))
        return sp.vstack(blocks, format="csr") if len(blocks) > 1 else blocks[0]

    def _terminal_hess(self, fun, x_f: np.ndarray, t_f: float) -> np.ndarray:
        """Central-difference Hessian of fun(x_f, t_f) over (x_f, t_f)."""
        n = self.n
        size = n + 1

        def grad_at(xv, tv):
            gx, gt = self._terminal_fd(fun, xv, tv)
            return np.concatenate([gx, [gt]])

        H = np.zeros((size, size))
        for i in range(size):
            if i < n:
                step = _HESS_FD * (1.0 + abs(x_f[i]))
                xp, xm = x_f.copy(), x_f.copy()
                xp[i] += step
                xm[i] -= step
                H[:, i] = (grad_at(xp, t_f) - grad_at(xm, t_f)) / (2 * step)
            else:
                step = _HESS_FD * (1.0 + abs(t_f))
                H[:, i] = (grad_at(x_f, t_f + step) - grad_at(x_f, t_f - step)) / (2 * step)
        return 0.5 * (H + H.T)

    def _hess_slots(self, X, Xdel, U, Udel):
        """Perturbation slots for node-level second differences: array,
        channel, per-node decision-column index (-1 where the delayed value
        comes from history and has no column)."""
        N1, n, m = self.N + 1, self.n, self.m
        kk = np.arange(N1)
        slots = []
        for i in range(n):
            slots.append((X, i, kk * n + i))
        for i in range(n):
            cols = (kk - self.off_x) * n + i
            cols[kk < self.off_x] = -1
            slots.append((Xdel, i, cols))
        for j in range(m):
            slots.append((U, j, self.u_offset + kk * m + j))
        for j in range(m):
            cols = self.u_offset + (kk - self.off_u[j]) * m + j
            cols[kk < self.off_u[j]] = -1
            slots.append((Udel, j, cols))
        return slots

    def lagrangian_hess(self, z: np.ndarray, w_eq: np.ndarray, w_ineq: np.ndarray):
        """Curvature of the multiplier-weighted constraints.

        Defect rows contribute node-level dynamics curvature weighted by the
        scheme coefficients and defect multipliers, including the horizon
        cross-terms when t_f is free (t_f is one more difference slot whose
        bump rescales both the step length and the grid times); boundary and
        goal-attainment rows contribute small dense terminal blocks.
        """
        X, U, t_f = self._unpack(z)
        times = self._times(t_f)
        Xdel, Udel = self._delayed_tables(X, U, times)
        N, n, m = self.N, self.n, self.m
        trap = self.config.scheme is Scheme.TRAPEZOIDAL

        nu = w_eq[: N * n].reshape(N, n)
        omega_bar = np.zeros((N + 1, n))
        if trap:
            omega_bar[:-1] += nu
            omega_bar[1:] += nu
            factor = -0.5 / N  # field carries -(t_f/2N) omega_bar.f per node
        else:
            omega_bar[:-1] = nu
            factor = -1.0 / N

        rows, cols, vals = [], [], []
        if np.any(omega_bar):
            # materialize the four argument tables as distinct arrays so a
            # slot perturbation never leaks into an aliased slot
            Xd = Xdel.copy() if Xdel is X else Xdel
            Ud = Udel.copy() if Udel is U else Udel
            tables = [X, Xd, U, Ud]
            slots = self._hess_slots(X, Xd, U, Ud)
            kind_of = {id(X): 0, id(Xd): 1, id(U): 2, id(Ud): 3}
            TF_SLOT = -1
            kk = np.arange(N + 1)
            slot_ids = list(range(len(slots)))
            if self.free_tf:
                slot_ids.append(TF_SLOT)
            tf_cols = np.full(N + 1, self.tf_index if self.free_tf else -1)

            def phi(override: dict, tf_v: float) -> np.ndarray:
                args = [override.get(kind, tables[kind]) for kind in range(4)]
                F = self._dyn_batch(args[0], args[1], args[2], args[3], self._times(tf_v))
                return (factor * tf_v) * np.einsum("kn,kn->k", omega_bar, F)

            tf_step = _HESS_FD * (1.0 + abs(t_f))

            def bump(override: dict, slot_id: int, tf_v: float):
                if slot_id == TF_SLOT:
                    return tf_v + tf_step, np.full(N + 1, tf_step)
                arr, ch, _ = slots[slot_id]
                kind = kind_of[id(arr)]
                src = override.get(kind, tables[kind])
                out = src.copy()
                steps = _HESS_FD * (1.0 + np.abs(arr[:, ch]))
                out[:, ch] += steps
                override[kind] = out
                return tf_v, steps

            def cols_of(slot_id: int) -> np.ndarray:
                return tf_cols if slot_id == TF_SLOT else slots[slot_id][2]

            phi0 = phi({}, t_f)
            singles = {}
            steps_all = {}
            for a in slot_ids:
                override: dict = {}
                tf_a, steps = bump(override, a, t_f)
                singles[a] = phi(override, tf_a)
                steps_all[a] = steps
            for ia, a in enumerate(slot_ids):
                cols_a = cols_of(a)
                for b in slot_ids[ia:]:
                    cols_b = cols_of(b)
                    override = {}
                    tf_v, _ = bump(override, a, t_f)
                    tf_v, steps_b = bump(override, b, tf_v)
                    phi_ab = phi(override, tf_v)
                    s_ab = (phi_ab - singles[a] - singles[b] + phi0) / (
                        steps_all[a] * steps_b
                    )
                    mask = (cols_a >= 0) & (cols_b >= 0) & (s_ab != 0.0)
                    if not np.any(mask):
                        continue
                    ca, cb, sv = cols_a[mask], cols_b[mask], s_ab[mask]
                    rows.append(ca)
                    cols.append(cb)
                    vals.append(sv)
                    if b != a:
                        rows.append(cb)
                        cols.append(ca)
                        vals.append(sv)

        H = sp.csc_matrix(
            (
                np.concatenate(vals) if vals else np.zeros(0),
                (
                    np.concatenate(rows) if rows else np.zeros(0, dtype=int),
                    np.concatenate(cols) if cols else np.zeros(0, dtype=int),
                ),
            ),
            shape=(self.dim, self.dim),
        )

        # boundary-equality curvature (small dense block over x0, xN, t_f)
        if self.p1:
            sig = w_eq[N * n :]
            if np.any(sig):
                H = H + self._boundary_hess(self.p.boundary_eq, sig, X, t_f)
        # goal-attainment row curvature (terminal block per objective)
        if self.goal_rows and w_ineq is not None and w_ineq.size:
            start = self.layout.ineq_blocks["goal"][0]
            mu_goal = w_ineq[start : start + self.goal_rows]
            if np.any(mu_goal):
                block = np.zeros((n + 1, n + 1))
                for i, phi_fn in enumerate(self.p.objectives):
                    if mu_goal[i] != 0.0:
                        block += mu_goal[i] * self.weights[i] * self._terminal_hess(
                            phi_fn, X[-1], t_f
                        )
                H = H + self._terminal_block_matrix(block)
        return H

    def _terminal_block_matrix(self, block: np.ndarray) -> sp.csc_matrix:
        n = self.n
        idx = list(range(self.N * n, (self.N + 1) * n))
        idx.append(self.tf_index if self.free_tf else 0)
        upto = n + 1 if self.free_tf else n
        rows, cols, vals = [], [], []
        for a in range(upto):
            for b in range(upto):
                if block[a, b] != 0.0:
                    rows.append(idx[a])
                    cols.append(idx[b])
                    vals.append(block[a, b])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def _boundary_hess(self, fun, sig: np.ndarray, X, t_f: float) -> sp.csc_matrix:
        """FD Hessian of sig^T theta(x0, xf, t_f) mapped into decision space."""
        n = self.n
        idx = list(range(n)) + list(range(self.N * n, (self.N + 1) * n))
        if self.free_tf:
            idx.append(self.tf_index)
        size = len(idx)

        def val(v: np.ndarray) -> float:
            x0 = v[:n]
            xf = v[n : 2 * n]
            tf = v[2 * n] if self.free_tf else t_f
            return float(sig @ np.atleast_1d(fun(x0, xf, tf)))

        base = np.concatenate([X[0], X[-1], [t_f]] if self.free_tf else [X[0], X[-1]])
        H = np.zeros((size, size))
        steps = _HESS_FD * (1.0 + np.abs(base))
        f0 = val(base)
        fs = np.empty(size)
        for a in range(size):
            va = base.copy()
            va[a] += steps[a]
            fs[a] = val(va)
        for a in range(size):
            for b in range(a, size):
                vab = base.copy()
                vab[a] += steps[a]
                vab[b] += steps[b]
                H[a, b] = H[b, a] = (val(vab) - fs[a] - fs[b] + f0) / (steps[a] * steps[b])
        rows, cols, vals = [], [], []
        for a in range(size):
            for b in range(size):
                if H[a, b] != 0.0:
                    rows.append(idx[a])
                    cols.append(idx[b])
                    vals.append(H[a, b])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def objective_hess(self, z: np.ndarray):
        """Curvature of the weighted-sum / single-objective modes (zero for
        goal attainment, whose objective is the linear attainment slot)."""
        if self.kind not in ("weighted_sum", "single_objective"):
            return None
        X, _, t_f = self._unpack(z)
        n = self.n
        block = np.zeros((n + 1, n + 1))
        if self.kind == "single_objective":
            block = self._terminal_hess(self.p.objectives[self.obj_index], X[-1], t_f)
        else:
            for i, phi in enumerate(self.p.objectives):
                block += self.weights[i] * self._terminal_hess(phi, X[-1], t_f)
        idx = list(range(self.N * n, (self.N + 1) * n))
        idx.append(self.tf_index if self.free_tf else 0)
        rows, cols, vals = [], [], []
        upto = n + 1 if self.free_tf else n
        for a in range(upto):
            for b in range(upto):
                rows.append(idx[a])
                cols.append(idx[b])
                vals.append(block[a, b])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def objective_grad(self, z: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.dim)
        if self.kind == "goal_attainment":
            grad[self.alpha_index] = 1.0
            return grad
        if self.kind is None:
            return grad
        X, _, t_f = self._unpack(z)
        xf_slice = slice(self.N * self.n, (self.N + 1) * self.n)
        if self.kind == "single_objective":
            g_x, g_t = self._terminal_fd(self.p.objectives[self.obj_index], X[-1], t_f)
            grad[xf_slice] = g_x
            if self.free_tf:
                grad[self.tf_index] = g_t
            return grad
        for i, phi in enumerate(self.p.objectives):
            g_x, g_t = self._terminal_fd(phi, X[-1], t_f)
            grad[xf_slice] += self.weights[i] * g_x
            if self.free_tf:
                grad[self.tf_index] += self.weights[i] * g_t
        return grad

    # ------------------------------------------------------------------
    def bounds(self) -> np.ndarray:
        p, N, n, m = self.p, self.N, self.n, self.m
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        if p.state_bounds is not None:
            lo[: (N + 1) * n] = np.tile(p.state_bounds[:, 0], N + 1)
            hi[: (N + 1) * n] = np.tile(p.state_bounds[:, 1], N + 1)
        if p.initial_state is not None:
            lo[:n] = p.initial_state
            hi[:n] = p.initial_state
        if m:
            lo[self.u_offset : self.u_offset + (N + 1) * m] = np.tile(p.control_bounds[:, 0], N + 1)
            hi[self.u_offset : self.u_offset + (N + 1) * m] = np.tile(p.control_bounds[:, 1], N + 1)
        if self.free_tf:
            lo[self.tf_index] = _TF_LOWER_FRAC * self.t_f_max
            hi[self.tf_index] = self.t_f_max
        if self.goal_rows:
            lo[self.alpha_index] = 0.0
        return np.column_stack([lo, hi])

    def scales(self):
        """(x_scale, eq_scale, ineq_scale, f_scale) or Nones when unhinted."""
        if self.p.scale_hint is None:
            return None, None, None, 1.0
        hint = self.p.scale_hint
        N, n, m = self.N, self.n, self.m
        x_scale = np.ones(self.dim)
        x_scale[: (N + 1) * n] = np.tile(hint, N + 1)
        if m:
            mag = np.nanmax(np.abs(np.where(np.isfinite(self.p.control_bounds), self.p.control_bounds, np.nan)), axis=1)
            mag = np.where(np.isfinite(mag) & (mag > 0), mag, 1.0)
            x_scale[self.u_offset : self.u_offset + (N + 1) * m] = np.tile(mag, N + 1)
        big = float(np.max(hint))
        if self.free_tf:
            x_scale[self.tf_index] = self.t_f_max
        f_scale = 1.0
        if self.goal_rows:
            x_scale[self.alpha_index] = big
            f_scale = big
        elif self.kind in ("weighted_sum", "single_objective"):
            f_scale = big
        eq_scale = np.tile(hint, N)
        if self.p1:
            eq_scale = np.concatenate([eq_scale, np.ones(self.p1)])
        ineq_scale = np.ones(self.p2 + (N + 1) * (self.p3 + self.p4))
        if self.goal_rows:
            ineq_scale = np.concatenate([ineq_scale, np.full(self.goal_rows, big)])
        return x_scale, eq_scale, ineq_scale if ineq_scale.size else None, f_scale


def transcribe(
    problem: ControlProblem,
    config: TranscriptionConfig,
    scalarization: Optional["ScalarizationSpec"] = None,
) -> tuple[NlpProblem, NlpLayout]:
    """Build the collocation NLP (defects, boundary rows, path rows at every
    node, goal-attainment rows when scalarizing) plus its index layout."""
    trans = _TranscribedOcp(problem, config, scalarization)
    x_scale, eq_scale, ineq_scale, f_scale = trans.scales()
    has_ineq = trans.p2 or trans.p3 or trans.p4 or trans.goal_rows
    nlp = NlpProblem(
        dim=trans.dim,
        objective=trans.objective,
        eq=trans.eq,
        ineq=trans.ineq if has_ineq else None,
        bounds=trans.bounds(),
        objective_grad=trans.objective_grad,
        objective_hess=trans.objective_hess,
        lagrangian_hess=trans.lagrangian_hess,
        eq_jac=trans.eq_jac,
        ineq_jac=trans.ineq_jac if has_ineq else None,
        x_scale=x_scale,
        eq_scale=eq_scale,
        ineq_scale=ineq_scale if has_ineq else None,
        f_scale=f_scale,
    )
    layout = trans.layout
    layout._transcribed = trans  # kept for seeding and residual helpers
    return nlp, layout


def build_seed(
    problem: ControlProblem,
    config: TranscriptionConfig,
    layout: NlpLayout,
    warm: Optional[Trajectory] = None,
) -> np.ndarray:
    """Initial decision vector.

    Default: constant state at the initial condition (zeros when the initial
    state is free), controls at mid-bounds, t_f at its guess.  With
    ``seed_mode="simulate"`` the state part is an explicit forward rollout
    under mid-bound controls.  A warm trajectory is mapped node-wise
    (linearly interpolated in normalized time when grids differ).
    """
    N, n, m = layout.n_intervals, layout.n, layout.m
    z = np.zeros(layout.dim)
    t_f = layout.t_f_fixed
    if t_f is None:
        t_f = config.t_f_guess if config.t_f_guess is not None else problem.horizon.t_f_max
    if warm is not None:
        tau_new = np.linspace(0.0, 1.0, N + 1)
        tau_old = warm.times / warm.t_f
        X = np.column_stack([np.interp(tau_new, tau_old, warm.states[:, i]) for i in range(n)])
        U = (
            np.column_stack([np.interp(tau_new, tau_old, warm.controls[:, j]) for j in range(m)])
            if m
            else np.zeros((N + 1, 0))
        )
        if layout.tf_index is not None:
            t_f = warm.t_f
    else:
        mid = (
            np.where(
                np.isfinite(problem.control_bounds).all(axis=1),
                0.5 * (problem.control_bounds[:, 0] + problem.control_bounds[:, 1]),
                0.0,
            )
            if m
            else np.zeros(0)
        )
        U = np.tile(mid, (N + 1, 1)) if m else np.zeros((N + 1, 0))
        if config.seed_mode == "simulate" and problem.initial_state is not None:
            sim = simulate(problem, U, N, t_f)
            X = sim.states
        else:
            base = problem.initial_state if problem.initial_state is not None else np.zeros(n)
            X = np.tile(base, (N + 1, 1))
    z[: (N + 1) * n] = X.ravel()
    if m:
        z[layout.u_offset : layout.u_offset + (N + 1) * m] = U.ravel()
    if layout.tf_index is not None:
        z[layout.tf_index] = t_f
    if layout.alpha_index is not None:
        trans = layout._transcribed
        phi = trans._phi_tilde(X[-1], t_f)
        z[layout.alpha_index] = max(0.0, float(np.max(trans.weights * (phi - trans.utopia))))
    return z


def extract_trajectory(solution: NlpSolution | np.ndarray, layout: NlpLayout) -> Trajectory:
    """Read (times, states, controls, t_f) back out of a decision vector."""
    z = solution.z if isinstance(solution, NlpSolution) else np.asarray(solution, dtype=float)
    t_f = layout.horizon_of(z)
    return Trajectory(
        times=layout.times(t_f),
        states=layout.states(z).copy(),
        controls=layout.controls(z).copy(),
        t_f=t_f,
    )


def estimate_adjoints(
    solution: NlpSolution, layout: NlpLayout, config: Optional[TranscriptionConfig] = None
) -> np.ndarray:
    """Adjoint estimates from the defect-constraint multipliers.

    Node k carries (minus) the multiplier of the k-th defect block, which
    discretizes the costate of the Hamiltonian-minimizing convention; the
    final node repeats the last block.  Values are meaningful up to the
    single positive scale inherent in the transcription.
    """
    need = layout.n_defect_rows
    if solution.eq_multipliers is None or solution.eq_multipliers.size < need:
        raise ValueError("NLP backend did not expose defect multipliers")
    nu = solution.eq_multipliers[:need].reshape(layout.n_intervals, layout.n)
    lam = np.vstack([-nu, -nu[-1]])
    return lam


def defect_residuals(nlp: NlpProblem, layout: NlpLayout, z: np.ndarray) -> np.ndarray:
    """Per-node defect residuals, shape (N, n)."""
    return nlp.eq(z)[: layout.n_defect_rows].reshape(layout.n_intervals, layout.n)
