"""Figures written next to an experiment's CSV/JSON output."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import moving_average  # noqa: E402

RC = {
    "font.size": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (6.0, 3.6),
    "savefig.dpi": 150,
}


def plot_moving_average(
    curves: Mapping[str, Sequence[float]],
    window: int,
    path,
    change_points: Sequence[int] = (),
    ylabel: str = "reward",
    title: str | None = None,
) -> Path:
    """Seed-averaged per-round series, smoothed with a trailing window, one line per algorithm."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, series in curves.items():
            ax.plot(range(1, len(series) + 1), moving_average(series, window), label=label, linewidth=1.0)
        for c in change_points:
            ax.axvline(c, color="0.6", linestyle=":", linewidth=0.8)
        ax.set_xlabel("round")
        ax.set_ylabel(f"{ylabel} (moving average, window {window})")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
