"""Command-line front end.

Subcommands: ideal, solve, sweep, optimize, verify.  Every command reads an
optional JSON config file (flags override file values), writes delimited
output (CSV with 17-significant-digit floats, JSON with full-precision plus
4-significant-figure display fields) into the output directory, and renders
matplotlib figures alongside unless --no-figures is given.

Exit status: 0 when the workflow completed successfully, 1 when a workflow
verdict failed (the bisection's advisory or iteration-limit messages go to
stderr verbatim), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from chebfront.front import (
    FrontOptions,
    MasterObjective,
    Termination,
    front_points_to_csv,
    iterations_to_csv,
    optimize_over_front,
    report_to_dict,
    report_to_json,
    sweep_front,
)
from chebfront.nlp import SolverOptions
from chebfront.problems import rayleigh, toy_static, tuberculosis
from chebfront.problems.tuberculosis import TbParams
from chebfront.scalarize import (
    ScalarizationKind,
    ScalarizedOcpSolver,
    goal_attainment_spec,
    ideal_costs,
)
from chebfront.transcription import Scheme, TranscriptionConfig
from chebfront import plots, verify

PROBLEMS = ("rayleigh", "tb", "toy-convex", "toy-nonconvex")


@dataclass
class RunConfig:
    problem: str = "rayleigh"
    beta: float = 100.0
    grid_n: int = 250
    scheme: str = "trapezoidal"
    seed_mode: str = "simulate"
    t_f_guess: Optional[float] = None
    delta: float = 1e-3
    eps: float = 5e-5
    kmax: int = 30
    eta: Optional[list] = None
    utopia: Optional[list] = None
    weight: Optional[float] = None
    w_min: float = 0.0
    w_max: float = 1.0
    points: int = 21
    scalarization: str = "chebyshev"
    verify_points: bool = False
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-7
    max_outer: int = 50
    out: str = "out"
    figures: bool = True

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.weight is not None and not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        if not 0.0 <= self.w_min <= self.w_max <= 1.0:
            raise ValueError("sweep grid must satisfy 0 <= w_min <= w_max <= 1")
        if self.grid_n < 2:
            raise ValueError("grid-n must be at least 2")
        if self.scheme not in ("euler", "trapezoidal"):
            raise ValueError("scheme must be euler or trapezoidal")
        if self.scalarization not in ("chebyshev", "weighted-sum"):
            raise ValueError("scalarization must be chebyshev or weighted-sum")


@dataclass
class Workspace:
    config: RunConfig
    solver: object
    master: MasterObjective
    problem: object = None
    tb_params: Optional[TbParams] = None
    default_utopia: Optional[np.ndarray] = None


def build_workspace(cfg: RunConfig) -> Workspace:
    cfg.validate()
    options = SolverOptions(
        tol_kkt=cfg.tol_kkt, tol_feas=cfg.tol_feas, max_outer=cfg.max_outer
    )
    if cfg.problem in ("toy-convex", "toy-nonconvex"):
        solver, master = toy_static(cfg.problem.split("-", 1)[1])
        return Workspace(config=cfg, solver=solver, master=master)
    if cfg.problem == "rayleigh":
        problem, master = rayleigh()
        t_guess = cfg.t_f_guess if cfg.t_f_guess is not None else 5.0
    else:
        problem, master = tuberculosis(beta=cfg.beta)
        t_guess = None
    trans = TranscriptionConfig(
        n_intervals=cfg.grid_n,
        scheme=Scheme(cfg.scheme),
        t_f_guess=t_guess,
        seed_mode=cfg.seed_mode,
    )
    ws = Workspace(
        config=cfg,
        solver=ScalarizedOcpSolver(problem, trans, options),
        master=master,
        problem=problem,
        default_utopia=np.zeros(2),
    )
    if cfg.problem == "tb":
        ws.tb_params = TbParams(beta=cfg.beta)
    return ws


def resolve_utopia(ws: Workspace, ideal: Optional[np.ndarray] = None) -> np.ndarray:
    cfg = ws.config
    if cfg.utopia is not None:
        return np.asarray(cfg.utopia, dtype=float)
    if cfg.eta is not None:
        if ideal is None:
            raise ValueError("eta-based utopia needs ideal costs; run the optimize command")
        return np.asarray(ideal, dtype=float) - np.asarray(cfg.eta, dtype=float)
    if ws.default_utopia is not None:
        return ws.default_utopia
    raise ValueError("toy problems need --utopia or --eta for this command")


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _sig4(x):
    return None if x is None else float(f"{float(x):.4g}")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trajectory_csv(path: Path, result) -> None:
    traj = result.trajectory
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    lam = result.adjoints
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
        if lam is not None:
            header += [f"lam{i + 1}" for i in range(n)]
        writer.writerow(header)
        for k in range(traj.times.size):
            row = [_fmt(traj.times[k])]
            row += [_fmt(v) for v in traj.states[k]]
            row += [_fmt(v) for v in traj.controls[k]]
            if lam is not None:
                row += [_fmt(v) for v in lam[k]]
            writer.writerow(row)


def solution_summary(result, master: MasterObjective) -> dict:
    raw = master.evaluate(result)
    phi = list(map(float, result.objectives.values))
    return {
        "objectives": phi,
        "alpha": result.alpha,
        "master_raw": raw,
        "master_sqrt": float(np.sqrt(raw)) if raw >= 0 else None,
        "status": result.nlp_status.value,
        "weights": list(map(float, result.w_used)),
        "t_f": float(result.trajectory.t_f) if result.trajectory is not None else None,
        "n_nlp_solves": result.n_nlp_solves,
        "display": {
            "objectives": [_sig4(v) for v in phi],
            "master": _sig4(np.sqrt(raw)) if master.report_sqrt and raw >= 0 else _sig4(raw),
        },
    }


# ---------------------------------------------------------------------------
# commands

def cmd_ideal(ws: Workspace, out: Path) -> int:
    cfg = ws.config
    if ws.problem is not None:
        trans = ws.solver.config
        options = ws.solver.options
        phi1, objs1, res1 = ideal_costs(ws.problem, trans, 1, options=options)
        phi2, objs2, res2 = ideal_costs(ws.problem, trans, 2, options=options, warm=res1)
    else:
        from chebfront.scalarize import ScalarizationSpec

        res1 = ws.solver.solve(
            ScalarizationSpec(
                kind=ScalarizationKind.SINGLE_OBJECTIVE,
                weights=np.array([1.0, 0.0]),
                objective_index=0,
            )
        )
        res2 = ws.solver.solve(
            ScalarizationSpec(
                kind=ScalarizationKind.SINGLE_OBJECTIVE,
                weights=np.array([0.0, 1.0]),
                objective_index=1,
            )
        )
        phi1, objs1 = res1.objectives[0], res1.objectives
        phi2, objs2 = res2.objectives[1], res2.objectives
    payload = {
        "ideal_costs": [float(phi1), float(phi2)],
        "boundary_pair_min_phi1": list(map(float, objs1.values)),
        "boundary_pair_min_phi2": list(map(float, objs2.values)),
        "statuses": [res1.nlp_status.value, res2.nlp_status.value],
        "display": {
            "boundary_pair_min_phi1": [_sig4(v) for v in objs1.values],
            "boundary_pair_min_phi2": [_sig4(v) for v in objs2.values],
        },
    }
    write_json(out / "ideal.json", payload)
    if cfg.figures:
        from chebfront.front import FrontPoint

        pts = [
            FrontPoint(w=1.0, objectives=objs1.values.copy(), master_raw=float("nan"),
                       master_sqrt=float("nan"), status=res1.nlp_status.value),
            FrontPoint(w=0.0, objectives=objs2.values.copy(), master_raw=float("nan"),
                       master_sqrt=float("nan"), status=res2.nlp_status.value),
        ]
        plots.save_front_figure(pts, str(out / "ideal.png"), title="boundary objective pairs")
    ok = res1.success and res2.success
    if not ok:
        print("ideal-cost solves did not fully converge", file=sys.stderr)
    return 0 if ok else 1


def cmd_solve(ws: Workspace, out: Path) -> int:
    cfg = ws.config
    if cfg.weight is None:
        raise ValueError("solve needs --weight")
    utopia = resolve_utopia(ws)
    spec = goal_attainment_spec(cfg.weight, utopia)
    result = ws.solver.solve(spec)
    write_json(out / "solution.json", solution_summary(result, ws.master))
    if result.trajectory is not None and result.trajectory.times.size > 1:
        write_trajectory_csv(out / "trajectory.csv", result)
        if cfg.figures:
            plots.save_trajectory_figure(
                result.trajectory, str(out / "solution.png"), title=f"{cfg.problem} at w={cfg.weight}"
            )
    return 0 if result.success else 1


def cmd_sweep(ws: Workspace, out: Path) -> int:
    cfg = ws.config
    utopia = resolve_utopia(ws)
    grid = np.linspace(cfg.w_min, cfg.w_max, cfg.points)
    kind = (
        ScalarizationKind.GOAL_ATTAINMENT
        if cfg.scalarization == "chebyshev"
        else ScalarizationKind.WEIGHTED_SUM
    )
    points = sweep_front(ws.solver, grid, utopia, master=ws.master, kind=kind)
    front_points_to_csv(points, str(out / "sweep.csv"))
    if cfg.verify_points and ws.problem is not None:
        entries = []
        warm = None
        for w in grid:
            spec = goal_attainment_spec(float(w), utopia)
            try:
                res = ws.solver.solve(spec, warm)
                warm = res
                profs = _switching_profiles(ws, res, float(w))
                entry = verify.profiles_to_dict(profs)
            except Exception as exc:  # noqa: BLE001 - recorded per point
                entry = {"error": str(exc)}
            entry["w"] = float(w)
            entries.append(entry)
        write_json(out / "sweep_verify.json", {"points": entries})
    if cfg.figures:
        plots.save_front_figure(points, str(out / "sweep.png"), title=f"{cfg.problem} sweep ({cfg.scalarization})")
    failed = sum(1 for p in points if p.status not in ("success", "max_iter"))
    if failed:
        print(f"{failed} sweep points failed", file=sys.stderr)
    return 0 if failed == 0 else 1


def cmd_optimize(ws: Workspace, out: Path) -> int:
    cfg = ws.config
    if cfg.utopia is not None:
        override = np.asarray(cfg.utopia, dtype=float)
    elif cfg.eta is not None:
        override = None  # eta-shifted utopia from the ideal costs
    else:
        override = ws.default_utopia
    options = FrontOptions(
        eta=np.asarray(cfg.eta, dtype=float) if cfg.eta is not None else None,
        utopia_override=override,
        delta=cfg.delta,
        eps=cfg.eps,
        k_max=cfg.kmax,
    )
    report = optimize_over_front(ws.solver, ws.master, options)
    report_to_json(report, str(out / "report.json"))
    iterations_to_csv(report, str(out / "iterations.csv"))
    if report.evaluated_points:
        front_points_to_csv(report.evaluated_points, str(out / "evaluations.csv"))
    if cfg.figures:
        plots.save_front_figure(
            report.evaluated_points or [], str(out / "front.png"), report=report,
            title=f"{cfg.problem} optimization over the front",
        )
        plots.save_bisection_figure(report, str(out / "bisection.png"))
    if report.termination in (Termination.FAILED, Termination.MAX_ITER):
        print(report.message, file=sys.stderr)
        return 1
    return 0


def _switching_profiles(ws: Workspace, result, w: float):
    if ws.config.problem == "rayleigh":
        w_f = _rayleigh_wf(ws)
        return [verify.rayleigh_switching(result, w, w_f)]
    if ws.config.problem == "tb":
        return verify.tb_switching(result, w, ws.tb_params)
    raise ValueError("switching verification applies to the dynamic case studies only")


def _rayleigh_wf(ws: Workspace) -> float:
    # upper essential-interval endpoint for the time-optimal switching law;
    # derived from the boundary solves at this workspace's configuration
    from chebfront.front import essential_interval

    trans = ws.solver.config
    options = ws.solver.options
    _, objs1, res1 = ideal_costs(ws.problem, trans, 1, options=options)
    _, objs2, _ = ideal_costs(ws.problem, trans, 2, options=options, warm=res1)
    utopia = resolve_utopia(ws)
    _, wf = essential_interval(
        ((objs1[0], objs1[1]), (objs2[0], objs2[1])), utopia
    )
    return wf


def cmd_verify(ws: Workspace, out: Path) -> int:
    cfg = ws.config
    if cfg.weight is None:
        raise ValueError("verify needs --weight")
    if ws.problem is None:
        raise ValueError("switching verification applies to the dynamic case studies only")
    utopia = resolve_utopia(ws)
    result = ws.solver.solve(goal_attainment_spec(cfg.weight, utopia))
    profiles = _switching_profiles(ws, result, cfg.weight)
    payload = verify.profiles_to_dict(profiles)
    payload["w"] = cfg.weight
    payload["objectives"] = list(map(float, result.objectives.values))
    write_json(out / "verification.json", payload)
    write_trajectory_csv(out / "trajectory.csv", result)
    if cfg.figures:
        plots.save_switching_figure(
            result.trajectory, profiles, str(out / "switching.png"),
            title=f"{cfg.problem} switching structure at w={cfg.weight}",
        )
    if not payload["passed"]:
        print("switching verification failed", file=sys.stderr)
    return 0 if payload["passed"] else 1


# ---------------------------------------------------------------------------
# argument handling

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", choices=PROBLEMS, help="built-in problem")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--grid-n", type=int, dest="grid_n", help="mesh intervals")
    parser.add_argument("--scheme", choices=("euler", "trapezoidal"))
    parser.add_argument("--seed-mode", choices=("constant", "simulate"), dest="seed_mode")
    parser.add_argument("--beta", type=float, help="TB transmission coefficient")
    parser.add_argument("--t-f-guess", type=float, dest="t_f_guess")
    parser.add_argument("--delta", type=float, help="finite-difference step in w")
    parser.add_argument("--eps", type=float, help="bisection half-interval tolerance")
    parser.add_argument("--kmax", type=int, help="bisection iteration cap")
    parser.add_argument("--utopia", help="comma-separated utopia vector, e.g. 0,0")
    parser.add_argument("--eta", help="comma-separated utopia shifts")
    parser.add_argument("--tol-kkt", type=float, dest="tol_kkt")
    parser.add_argument("--tol-feas", type=float, dest="tol_feas")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _parse_pair(text: str) -> list:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 2:
        raise ValueError("expected two comma-separated values")
    return vals


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    overrides = {
        "problem": args.problem,
        "grid_n": args.grid_n,
        "scheme": args.scheme,
        "seed_mode": args.seed_mode,
        "beta": args.beta,
        "t_f_guess": args.t_f_guess,
        "delta": args.delta,
        "eps": args.eps,
        "kmax": args.kmax,
        "tol_kkt": args.tol_kkt,
        "tol_feas": args.tol_feas,
        "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "utopia", None):
        cfg.utopia = _parse_pair(args.utopia)
    if getattr(args, "eta", None):
        cfg.eta = _parse_pair(args.eta)
    if args.no_figures:
        cfg.figures = False
    for key in ("weight", "w_min", "w_max", "points", "scalarization"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "verify_points", False):
        cfg.verify_points = True
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chebfront",
        description="Multi-objective optimal control: scalarized solves and optimization over the Pareto front",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ideal = sub.add_parser("ideal", help="boundary objective pairs (ideal costs)")
    _add_common(p_ideal)

    p_solve = sub.add_parser("solve", help="one goal-attainment solve at a weight")
    _add_common(p_solve)
    p_solve.add_argument("--weight", type=float, required=False)

    p_sweep = sub.add_parser("sweep", help="scalarized solves over a weight grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--w-min", type=float, dest="w_min")
    p_sweep.add_argument("--w-max", type=float, dest="w_max")
    p_sweep.add_argument("--points", type=int)
    p_sweep.add_argument("--scalarization", choices=("chebyshev", "weighted-sum"))
    p_sweep.add_argument("--verify", action="store_true", dest="verify_points")

    p_opt = sub.add_parser("optimize", help="optimize the master objective over the front")
    _add_common(p_opt)

    p_ver = sub.add_parser("verify", help="switching-structure verification at a weight")
    _add_common(p_ver)
    p_ver.add_argument("--weight", type=float, required=False)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        ws = build_workspace(cfg)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    commands = {
        "ideal": cmd_ideal,
        "solve": cmd_solve,
        "sweep": cmd_sweep,
        "optimize": cmd_optimize,
        "verify": cmd_verify,
    }
    try:
        return commands[args.command](ws, out)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as a failure verdict
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
