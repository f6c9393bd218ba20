"""Report figures rendered straight to files.

Uses the object-oriented matplotlib API with the Agg canvas so rendering
needs no display, touches no global state, and produces the same bytes on
every run with the same inputs.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = [
    "plot_trajectories",
    "plot_discrepancy",
    "plot_traces",
    "plot_reconstruction",
]


def _new_figure(width, height):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def plot_trajectories(path, dataset, curves):
    """Observed levels with posterior-predictive level curves.

    ``curves`` maps experiment id to a list of (times, levels) arrays, one
    per posterior draw.  Held-out rows show as crosses.
    """
    exp_ids = [e.id for e in dataset.experiments if e.id in curves]
    n = max(1, len(exp_ids))
    fig = _new_figure(4.5 * n, 3.6)
    axes = fig.subplots(1, n, squeeze=False)[0]
    for ax, exp_id in zip(axes, exp_ids):
        exp = dataset.experiment(exp_id)
        for times, levels in curves[exp_id]:
            ax.plot(times, levels, color="tab:blue", alpha=0.15, lw=0.8)
        ax.plot(exp.times, exp.levels, "ko", ms=4, label="observed")
        if exp.held_out_times.size:
            ax.plot(exp.held_out_times, exp.held_out_levels, "rx", ms=6, label="held out")
        ax.set_title(f"{exp.id} ({exp.kind})")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("level [cm]")
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)


def plot_discrepancy(path, table):
    """Posterior correction band against binned calibration residuals."""
    fig = _new_figure(5.5, 3.8)
    ax = fig.subplots()
    ax.fill_between(
        table.level_grid,
        table.delta_low,
        table.delta_high,
        color="tab:blue",
        alpha=0.25,
        label="correction band",
    )
    ax.plot(table.level_grid, table.delta_mean, color="tab:blue", label="correction mean")
    keep = np.isfinite(table.bin_mean_residual)
    ax.plot(
        np.asarray(table.bin_centers)[keep],
        np.asarray(table.bin_mean_residual)[keep],
        "ks",
        ms=4,
        label="binned residuals",
    )
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("level [cm]")
    ax.set_ylabel("level correction [cm]")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)


def plot_traces(path, traces, names, indices=None):
    """Post-burn-in trace plots, one panel per parameter."""
    if indices is None:
        indices = range(len(names))
    indices = list(indices)
    fig = _new_figure(7.0, 1.6 * len(indices))
    axes = fig.subplots(len(indices), 1, squeeze=False)[:, 0]
    for ax, j in zip(axes, indices):
        for trace in traces:
            draws = trace.post_constrained
            ax.plot(
                np.arange(trace.n_burn_in, trace.n_burn_in + draws.shape[0]),
                draws[:, j],
                lw=0.5,
            )
        ax.set_ylabel(names[j], fontsize=8)
    axes[-1].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path)


def plot_reconstruction(path, t0_draws, h0_draws, interval=None):
    """Joint and marginal posterior of the unknown start time and level."""
    fig = _new_figure(8.0, 3.6)
    ax_joint, ax_hist = fig.subplots(1, 2)
    ax_joint.plot(t0_draws, h0_draws, ".", color="tab:blue", ms=2, alpha=0.3)
    ax_joint.set_xlabel("start time t0 [s]")
    ax_joint.set_ylabel("initial level h0 [cm]")
    ax_hist.hist(h0_draws, bins=40, color="tab:blue", alpha=0.7)
    if interval is not None:
        ax_hist.axvline(interval[0], color="k", ls="--", lw=1)
        ax_hist.axvline(interval[1], color="k", ls="--", lw=1)
    ax_hist.set_xlabel("initial level h0 [cm]")
    ax_hist.set_ylabel("draws")
    fig.tight_layout()
    fig.savefig(path)
