"""Delimited and graphical output for benchmark and simulation runs.

Every writer produces a CSV; the figure writers render the same data to PNG
next to it so a run leaves both machine-readable and eyeball-ready artifacts.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .sim import SimReport, erlang_loss


@dataclass(frozen=True)
class BenchRow:
    n_vars: int
    treewidth_bound: int
    mean_s: float
    p95_s: float
    max_s: float


def write_bench_csv(rows: list[BenchRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_vars", "treewidth_bound", "mean_s", "p95_s", "max_s"])
        for r in rows:
            writer.writerow([r.n_vars, r.treewidth_bound, r.mean_s, r.p95_s, r.max_s])


def write_lock_time_figure(rows: list[BenchRow], path: str) -> None:
    """Mean commit lock time against network size, one series per treewidth."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in sorted({r.treewidth_bound for r in rows}):
        pts = sorted((r.n_vars, r.mean_s * 1000) for r in rows if r.treewidth_bound == k)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"treewidth {k}")
    ax.set_xlabel("variables")
    ax.set_ylabel("mean lock time (ms)")
    ax.set_title("Edit lock time versus network size")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_sim_trace_csv(trace: list[tuple[int, float, bool, float | None]],
                        path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seq", "arrival_s", "accepted", "lock_time_s"])
        for seq, arrival, accepted, lock_time in trace:
            writer.writerow([seq, arrival, int(accepted),
                             "" if lock_time is None else lock_time])


def write_rejection_csv(reports: list[SimReport], lock_time_s: float, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["intensity_per_min", "attempted", "accepted", "rejected",
                         "rejection_rate", "erlang_loss", "seed"])
        for r in reports:
            writer.writerow([r.intensity, r.attempted, r.accepted, r.rejected,
                             r.rejection_rate, erlang_loss(r.intensity, lock_time_s),
                             r.seed])


def write_rejection_figure(reports: list[SimReport], lock_time_s: float,
                           path: str) -> None:
    """Simulated rejection rates with the analytic loss curve a/(1+a)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = [r.intensity for r in reports]
    ys = [100 * r.rejection_rate for r in reports]
    ax.scatter(xs, ys, zorder=3, label="simulated")
    grid = np.linspace(0, max(xs) * 1.1 if xs else 1, 200)
    ax.plot(grid, [100 * erlang_loss(x, lock_time_s) for x in grid],
            color="gray", label="loss model a/(1+a)")
    ax.set_xlabel("arrival intensity (edits/minute)")
    ax.set_ylabel("rejection rate (%)")
    ax.set_title(f"Rejections under a {lock_time_s:.2f} s commit lock")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
