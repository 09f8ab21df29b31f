"""Figure rendering for validation and benchmark reports.

Figures land next to the CSV output so a run directory is self-contained:
numbers for pipelines, pictures for humans.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METRIC_LABELS = (("wasserstein", "Wasserstein-1 [counts]"),
                  ("kl", "KL divergence [nats]"),
                  ("mean_diff", "|mean diff| [counts]"),
                  ("var_diff", "|var diff| [counts$^2$]"))

_METHOD_COLORS = {"mars": "tab:blue", "renewal": "tab:orange",
                  "poisson": "tab:red"}


def render_validation_figure(report, path) -> None:
    """Grid-averaged metric bars, one panel per metric, log scale."""
    methods = report.methods()
    fig, axes = plt.subplots(1, 4, figsize=(13, 3.2))
    for ax, (key, label) in zip(axes, _METRIC_LABELS):
        vals = [max(report.grid_average(m)[key], 1e-6) for m in methods]
        colors = [_METHOD_COLORS.get(m, "tab:gray") for m in methods]
        ax.bar(np.arange(len(methods)), vals, color=colors)
        ax.set_xticks(np.arange(len(methods)))
        ax.set_xticklabels(methods, rotation=20)
        ax.set_yscale("log")
        ax.set_title(label, fontsize=10)
        ax.grid(True, axis="y", alpha=0.3)
    fig.suptitle("Count-distribution accuracy vs sequential oracle (grid average)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bench_figure(curves, path) -> None:
    """Log-log runtime curves, one panel per benchmark axis."""
    axes_used = []
    for c in curves:
        if c.axis not in axes_used:
            axes_used.append(c.axis)
    fig, axs = plt.subplots(1, len(axes_used), figsize=(4.4 * len(axes_used), 3.4),
                            squeeze=False)
    for ax, axis_name in zip(axs[0], axes_used):
        for c in curves:
            if c.axis != axis_name:
                continue
            xs = [r.value for r in c.rows]
            ys = [r.median_s for r in c.rows]
            ax.loglog(xs, ys, marker="o",
                      color=_METHOD_COLORS.get(c.simulator, "tab:gray"),
                      label=f"{c.simulator} (slope {c.slope:.2f}, {c.growth_class})")
        ax.set_xlabel(axis_name)
        ax.set_ylabel("wall time [s]")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.suptitle("Runtime scaling")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
