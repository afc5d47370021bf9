"""Figure rendering for the report path.

Renders the estimated transformation curve (with its pointwise band) and a
benchmark summary chart to PNG files next to the delimited outputs. Uses
the non-interactive Agg backend so the functions work headless.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def g_curve_figure(
    path: str,
    s: np.ndarray,
    g: np.ndarray,
    ci_lo: Optional[np.ndarray] = None,
    ci_hi: Optional[np.ndarray] = None,
    label: str = "estimate",
    truth: Optional[np.ndarray] = None,
) -> None:
    """Plot g(s) over the evaluation grid, shading the pointwise band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if ci_lo is not None and ci_hi is not None:
        ax.fill_between(s, ci_lo, ci_hi, alpha=0.25, linewidth=0, label="95% band")
    ax.plot(s, g, lw=1.8, label=label)
    if truth is not None:
        ax.plot(s, truth, lw=1.2, ls="--", color="black", label="truth")
    ax.set_xlabel("s")
    ax.set_ylabel("g(s)")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def results_figure(path: str, rows: Sequence) -> None:
    """Benchmark rows as mean +/- ESE whiskers around the true value."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels, means, eses = [], [], []
    for r in rows:
        labels.append(f"{r.scenario}/{r.estimator}")
        means.append(r.mean)
        eses.append(r.ese)
    pos = np.arange(len(labels))
    ax.errorbar(pos, means, yerr=eses, fmt="o", capsize=4)
    if rows:
        ax.axhline(rows[0].truth_pte, ls="--", lw=1.0, color="black")
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=9)
    ax.set_ylabel("PTE")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
