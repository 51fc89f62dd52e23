"""Render benchmark and training reports as PNG files.

Every renderer writes alongside the delimited output of the same run, so
a results directory is self-contained: CSVs for machines, figures for
people.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FAN_HOURS = 72


def fan_chart(forecast, actuals, path: str | Path, title: str = "") -> None:
    """Quantile fan over the first few days of the range, with actual load."""
    n = min(FAN_HOURS, forecast.n_instants)
    x = np.arange(n)
    values = forecast.values[:n]
    levels = list(forecast.levels)

    fig, ax = plt.subplots(figsize=(9, 4))
    pairs = [(0.05, 0.95, 0.15), (0.25, 0.75, 0.3)]
    for lo, hi, alpha in pairs:
        if lo in levels and hi in levels:
            ax.fill_between(
                x,
                values[:, levels.index(lo)],
                values[:, levels.index(hi)],
                color="tab:blue",
                alpha=alpha,
                linewidth=0,
                label=f"{int((hi - lo) * 100)}% interval",
            )
    if 0.5 in levels:
        ax.plot(x, values[:, levels.index(0.5)], color="tab:blue", lw=1.2, label="median")
    ax.plot(x, np.asarray(actuals)[:n], color="black", lw=1.0, label="actual")
    ax.set_xlabel(f"hours from {forecast.instants[0]}")
    ax.set_ylabel("demand (MW)")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def score_bars(names, reports, path: str | Path) -> None:
    """Pinball and Winkler side by side for each benchmarked model."""
    x = np.arange(len(names))
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, metric, label in (
        (axes[0], [r.pinball for r in reports], "mean pinball loss (MW)"),
        (axes[1], [r.winkler for r in reports], "mean Winkler score (MW)"),
    ):
        ax.bar(x, metric, color="tab:blue")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def importance_chart(ranking, path: str | Path, top_n: int = 15) -> None:
    """Horizontal importance bars with the cumulative share overlaid."""
    top = ranking[:top_n]
    names = [e.name for e in top]
    imps = [e.importance for e in top]
    cums = [e.cumulative for e in top]
    y = np.arange(len(top))

    fig, ax = plt.subplots(figsize=(7, 0.35 * len(top) + 1.5))
    ax.barh(y, imps, color="tab:blue")
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("importance (%)")
    ax2 = ax.twiny()
    ax2.plot(cums, y, color="tab:red", marker=".", lw=1.0)
    ax2.set_xlim(0, 105)
    ax2.set_xlabel("cumulative (%)", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_chart(rows, path: str | Path) -> None:
    """Score and training time against the second-stage hidden structure."""
    labels = ["(" + ",".join(str(h) for h in r.structure) + ")" for r in rows]
    x = np.arange(len(rows))
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(x, [r.report.pinball for r in rows], marker="o", label="pinball")
    axes[0].plot(x, [r.report.mae for r in rows], marker="s", label="MAE")
    axes[0].set_ylabel("MW")
    axes[0].legend(fontsize=8)
    axes[1].bar(x, [r.train_seconds for r in rows], color="tab:gray")
    axes[1].set_ylabel("stage-2 training (s)")
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_xlabel("hidden structure")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
