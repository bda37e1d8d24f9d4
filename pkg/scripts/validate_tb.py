#!/usr/bin/env python3
"""Delayed TB validation at the acceptance mesh (N=500, h=0.01).

Runs the full optimization over the front (coarser bisection tolerance: the
acceptance check asks for w* within +-0.01), then switching verification at
the interval endpoints and the optimum, and saves results to JSON.
"""

import json
import sys
import time

import numpy as np

from chebfront.front import FrontOptions, optimize_over_front, report_to_dict
from chebfront.nlp import SolverOptions
from chebfront.problems import tuberculosis
from chebfront.problems.tuberculosis import TbParams
from chebfront.scalarize import ScalarizedOcpSolver, goal_attainment_spec
from chebfront.transcription import TranscriptionConfig
from chebfront import verify


def main(n_intervals: int = 500, beta: float = 100.0) -> None:
    problem, master = tuberculosis(beta=beta)
    solver = ScalarizedOcpSolver(
        problem,
        TranscriptionConfig(n_intervals=n_intervals, seed_mode="simulate"),
        SolverOptions(tol_kkt=1e-6, tol_feas=1e-6),
    )
    t0 = time.time()
    report = optimize_over_front(
        solver, master, FrontOptions(utopia_override=np.zeros(2), eps=2e-3)
    )
    t_front = time.time() - t0

    w0, wf = report.essential_interval
    params = TbParams(beta=beta)
    cases = {}
    t0 = time.time()
    warm = None
    for label, w in (("w0", w0), ("w_star", report.w_star), ("w_f", wf)):
        res = solver.solve(goal_attainment_spec(w, np.zeros(2)), warm)
        warm = res
        profs = verify.tb_switching(res, w, params)
        cases[label] = {
            "w": float(w),
            "objectives": list(map(float, res.objectives.values)),
            "terminal_state": list(map(float, res.trajectory.states[-1])),
            "status": res.nlp_status.value,
            "channels": [
                {
                    "switch_times": list(map(float, p.switch_times)),
                    "structure": list(map(float, p.structure)),
                    "agreement": p.agreement,
                    "is_bang_bang": p.is_bang_bang,
                    "terminal_window_max_control": p.diagnostics["terminal_window_max_control"],
                    "passed": p.passed,
                }
                for p in profs
            ],
        }
    t_verify = time.time() - t0

    payload = {
        "n_intervals": n_intervals,
        "beta": beta,
        "report": report_to_dict(report),
        "cases": cases,
        "front_seconds": t_front,
        "verify_seconds": t_verify,
    }
    with open("/tmp/tb_validation.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(json.dumps(payload["report"]["display"], indent=2))
    for label, case in cases.items():
        print(label, case["w"], case["objectives"],
              [c["switch_times"] for c in case["channels"]],
              "L2f", case["terminal_state"][3])
    print("front:", t_front / 60, "min; verify:", t_verify / 60, "min")


if __name__ == "__main__":
    main(*(int(sys.argv[1]),) if len(sys.argv) > 1 else ())
