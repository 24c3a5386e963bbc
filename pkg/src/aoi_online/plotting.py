"""Figures for scenario reports, written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (6.4, 4.0)


def savefig(fig, filename, tight=True):
    if tight:
        fig.savefig(filename, dpi=150, bbox_inches="tight", pad_inches=0.1)
    else:
        fig.savefig(filename, dpi=150)
    plt.close(fig)


def _band(ax, x, mean, ci, label):
    line, = ax.plot(x, mean, label=label)
    ax.fill_between(x, mean - ci, mean + ci, color=line.get_color(), alpha=0.2, linewidth=0)


def plot_metric(summaries: dict, metric: str, path: str | Path, *, ylabel: str,
                reference: float | None = None, ref_label: str = "optimum",
                xlabel: str = "cycle k", logx: bool = True) -> Path:
    """One curve (mean +/- CI) per policy for a checkpointed metric."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, s in summaries.items():
        if metric == "time_avg_aoi":
            rows = [r for r in s.rows() if r[1] == "time_avg_aoi"]
            if not rows:
                continue
            x = np.array([r[0] for r in rows])
            mean = np.array([r[2] for r in rows])
            ci = np.array([r[3] for r in rows])
        else:
            values = s.per_run[metric]
            if np.all(np.isnan(values)):
                continue
            x = np.asarray(s.checkpoints)
            mean, ci = s.mean(metric), s.ci_half_width(metric)
        _band(ax, x, mean, ci, label)
    if reference is not None:
        ax.axhline(reference, color="k", linestyle="--", linewidth=1, label=ref_label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    path = Path(path)
    savefig(fig, path)
    return path


def plot_single_path(trajectories: dict, path: str | Path, *, reference: float | None = None) -> Path:
    """Running AoI ratio of one sample path per policy."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, traj in trajectories.items():
        k = np.arange(1, len(traj) + 1)
        ax.plot(k, traj.cumulative_ratio(), label=label)
    if reference is not None:
        ax.axhline(reference, color="k", linestyle="--", linewidth=1, label="optimum")
    ax.set_xscale("log")
    ax.set_xlabel("cycle k")
    ax.set_ylabel("running AoI ratio")
    ax.legend(frameon=False)
    path = Path(path)
    savefig(fig, path)
    return path
