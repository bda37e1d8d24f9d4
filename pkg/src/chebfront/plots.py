"""Matplotlib figure rendering for the CLI report paths.

Every figure writer takes explicit data plus an output path and saves a PNG;
nothing here touches interactive backends.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from chebfront.core import Trajectory
from chebfront.front import BisectionReport, FrontPoint
from chebfront.verify import SwitchingProfile

plt.rc("figure", figsize=(7.0, 4.6), dpi=130)
plt.rc("axes", grid=True)
plt.rc("grid", alpha=0.3)


def save_front_figure(
    points: Sequence[FrontPoint],
    path: str,
    report: Optional[BisectionReport] = None,
    title: str = "trade-off curve",
) -> None:
    fig, ax = plt.subplots()
    ok = [p for p in points if np.isfinite(p.objectives).all()]
    if ok:
        order = np.argsort([p.w for p in ok])
        phi1 = np.array([ok[i].objectives[0] for i in order])
        phi2 = np.array([ok[i].objectives[1] for i in order])
        ax.plot(phi1, phi2, "o-", ms=3.5, lw=1.0, color="tab:blue", label="scalarized solves")
    if report is not None:
        (b1, b2) = report.boundary_points
        ax.plot([b1[0], b2[0]], [b1[1], b2[1]], "s", color="tab:green", ms=7, mfc="none", label="boundary points")
        if report.objectives_at_star is not None:
            ax.plot(
                report.objectives_at_star[0],
                report.objectives_at_star[1],
                "rs",
                ms=8,
                label=f"master optimum (w*={report.w_star:.4f})",
            )
    ax.set_xlabel("objective 1")
    ax.set_ylabel("objective 2")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_trajectory_figure(traj: Trajectory, path: str, title: str = "solution") -> None:
    n, m = traj.states.shape[1], traj.controls.shape[1]
    fig, axes = plt.subplots(2 if m else 1, 1, sharex=True, figsize=(7.0, 6.0 if m else 4.0))
    ax_x = axes[0] if m else axes
    for i in range(n):
        ax_x.plot(traj.times, traj.states[:, i], lw=1.2, label=f"x{i + 1}")
    ax_x.set_ylabel("states")
    ax_x.legend(loc="best", fontsize=8, ncol=min(n, 3))
    ax_x.set_title(title)
    if m:
        for j in range(m):
            axes[1].step(traj.times, traj.controls[:, j], where="mid", lw=1.2, label=f"u{j + 1}")
        axes[1].set_ylabel("controls")
        axes[1].set_xlabel("t")
        axes[1].legend(loc="best", fontsize=8)
    else:
        ax_x.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_switching_figure(
    traj: Trajectory, profiles: Sequence[SwitchingProfile], path: str, title: str = "switching structure"
) -> None:
    fig, axes = plt.subplots(len(profiles), 1, sharex=True, figsize=(7.0, 3.2 * len(profiles)))
    if len(profiles) == 1:
        axes = [axes]
    for ax, prof in zip(axes, profiles):
        j = prof.channel
        ax.step(traj.times, traj.controls[:, j], where="mid", lw=1.3, color="tab:blue", label=f"u{j + 1}")
        scale = float(np.max(np.abs(prof.sigma))) or 1.0
        ax.plot(prof.times, prof.sigma / scale, "k:", lw=1.0, label="switching function (scaled)")
        for ts in prof.switch_times:
            ax.axvline(ts, color="tab:red", lw=0.8, alpha=0.6)
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_ylabel(f"channel {j + 1}")
        ax.legend(loc="best", fontsize=8)
    axes[0].set_title(title)
    axes[-1].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_bisection_figure(report: BisectionReport, path: str) -> None:
    fig, ax = plt.subplots()
    if report.iterations:
        ks = [it.k for it in report.iterations]
        cs = [it.c for it in report.iterations]
        ax.plot(ks, cs, "o-", ms=4, lw=1.0, color="tab:blue", label="midpoints")
    w0, wf = report.essential_interval
    ax.axhline(w0, color="tab:green", lw=0.8, ls="--", label="essential interval")
    ax.axhline(wf, color="tab:green", lw=0.8, ls="--")
    if report.w_star is not None:
        ax.axhline(report.w_star, color="tab:red", lw=1.0, label=f"w* = {report.w_star:.4f}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("weight")
    ax.set_title("bisection iterates")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
