#!/usr/bin/env python3
"""Full oscillator validation at the acceptance mesh (N=1000).

Runs the complete optimization over the front at the four-decimal-place
tolerance, then the switching verification at the upper interval endpoint,
and saves everything needed by the acceptance tests to JSON.
"""

import json
import sys
import time

import numpy as np

from chebfront.front import FrontOptions, optimize_over_front, report_to_dict
from chebfront.nlp import SolverOptions
from chebfront.problems import rayleigh
from chebfront.scalarize import ScalarizedOcpSolver, goal_attainment_spec
from chebfront.transcription import TranscriptionConfig
from chebfront import verify


def main(n_intervals: int = 1000, eps: float = 1.7e-6) -> None:
    problem, master = rayleigh()
    solver = ScalarizedOcpSolver(
        problem,
        TranscriptionConfig(n_intervals=n_intervals, t_f_guess=5.0, seed_mode="simulate"),
        SolverOptions(tol_kkt=1e-6, tol_feas=1e-8),
    )
    t0 = time.time()
    report = optimize_over_front(
        solver, master, FrontOptions(utopia_override=np.zeros(2), eps=eps)
    )
    t_front = time.time() - t0

    w0, wf = report.essential_interval
    t0 = time.time()
    res_wf = solver.solve(goal_attainment_spec(wf, np.zeros(2)))
    prof = verify.rayleigh_switching(res_wf, wf, wf)
    t_verify = time.time() - t0

    payload = {
        "n_intervals": n_intervals,
        "eps": eps,
        "report": report_to_dict(report),
        "front_seconds": t_front,
        "verify_seconds": t_verify,
        "wf_solve": {
            "objectives": list(map(float, res_wf.objectives.values)),
            "status": res_wf.nlp_status.value,
        },
        "switching": {
            "structure": list(map(float, prof.structure)),
            "switch_times": list(map(float, prof.switch_times)),
            "agreement": prof.agreement,
            "is_bang_bang": prof.is_bang_bang,
            "passed": prof.passed,
            "diagnostics": prof.diagnostics,
        },
    }
    with open("/tmp/rayleigh_validation.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(json.dumps(payload["report"]["display"], indent=2))
    print("front:", t_front / 60, "min; verify:", t_verify / 60, "min")


if __name__ == "__main__":
    main(*(int(sys.argv[1]),) if len(sys.argv) > 1 else ())
