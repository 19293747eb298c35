"""Static SVG figures for closed-loop trajectories and residual predictions."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import PredictionTable, RunLog  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.4,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "esnmpc",  # stable element ids between runs
}

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def size(width=6.4, rows=1):
    return (width, width * GOLDEN * 0.6 * rows + 0.6)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def trajectories(nominal: RunLog, compensated: RunLog, path, reference=(0.0, 0.0)) -> Path:
    """Position and velocity of the nominal-MPC and compensated-MPC runs against the target."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, sharex=True, figsize=size(rows=2))
        labels = ("position s [m]", "velocity v [m/s]")
        for i, ax in enumerate(axes):
            ax.plot(nominal.t, nominal.x_true[:, i], color="tab:blue", label="nominal MPC")
            ax.plot(compensated.t, compensated.x_true[:, i], color="tab:red",
                    linestyle="--", label="ESN-compensated MPC")
            ax.axhline(reference[i], color="k", linewidth=0.8, linestyle=":", label="target")
            ax.set_ylabel(labels[i])
        axes[0].legend(loc="upper right")
        axes[-1].set_xlabel("time [s]")
        fig.tight_layout()
        return _save(fig, path)


def prediction(table: PredictionTable, path) -> Path:
    """Held-out residual against the reservoir's teacher-forced prediction, one panel per dimension."""
    n = table.mu_true.shape[1]
    names = ("position residual", "velocity residual") if n == 2 else tuple(
        f"residual {i + 1}" for i in range(n))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, sharex=True, figsize=size(rows=n), squeeze=False)
        for i, ax in enumerate(axes[:, 0]):
            ax.plot(table.k, table.mu_true[:, i], color="k", marker="o", markersize=2.5,
                    label="true")
            ax.plot(table.k, table.mu_pred[:, i], color="tab:orange", linestyle="--",
                    label="ESN prediction")
            ax.set_ylabel(names[i])
        axes[0, 0].legend(loc="upper right")
        axes[-1, 0].set_xlabel("step k")
        fig.tight_layout()
        return _save(fig, path)
