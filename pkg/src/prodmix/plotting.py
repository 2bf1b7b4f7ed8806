"""Figures for benchmark reports, written next to the delimited output."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def get_report_figure(width=6.0, height=None):
    """A figure/axes pair with consistent fonts for report plots."""
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    if not height:
        height = width * golden_ratio
    fig, ax = plt.subplots(figsize=(width, height), facecolor="w")
    ax.tick_params(labelsize=width * 1.6)
    ax.xaxis.label.set_size(width * 2)
    ax.yaxis.label.set_size(width * 2)
    ax.grid(True, which="both", alpha=0.3, linewidth=0.5)
    return fig, ax


def plot_error_scaling(records, path, x_field="eps_or_N", slope=None):
    """Log-log scatter of model_distance against the sweep variable, with per-cell medians.

    Failed trials (no model_distance) are skipped.
    """
    xs = np.array([r[x_field] for r in records if r.get("model_distance") is not None], float)
    ys = np.array([r["model_distance"] for r in records if r.get("model_distance") is not None], float)
    fig, ax = get_report_figure()
    ok = (xs > 0) & (ys > 0)
    if ok.any():
        ax.loglog(xs[ok], ys[ok], "o", ms=3, alpha=0.35, color="0.4", label="trials")
        cells = np.unique(xs[ok])
        med = np.array([np.median(ys[ok][xs[ok] == c]) for c in cells])
        ax.loglog(cells, med, "s-", color="C0", label="median")
    ax.set_xlabel("perturbation eps" if x_field == "eps_or_N" else x_field)
    ax.set_ylabel("model distance")
    if slope is not None and np.isfinite(slope):
        ax.set_title(f"log-log slope {slope:.3f}", fontsize=10)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_stage_times(records, path):
    """Median per-stage wall time for each sweep cell as grouped bars."""
    stages = ["search_ms", "bootstrap_ms", "power_ms", "recover_ms"]
    cells = sorted({r["eps_or_N"] for r in records})
    fig, ax = get_report_figure()
    width = 0.8 / len(stages)
    for s_idx, stage in enumerate(stages):
        med = []
        for c in cells:
            vals = [r[stage] for r in records if r["eps_or_N"] == c and r.get(stage) is not None]
            med.append(np.median(vals) if vals else 0.0)
        ax.bar(np.arange(len(cells)) + s_idx * width, med, width, label=stage.replace("_ms", ""))
    ax.set_xticks(np.arange(len(cells)) + 0.4 - width / 2)
    ax.set_xticklabels([f"{c:g}" for c in cells], fontsize=7)
    ax.set_ylabel("median time (ms)")
    if any(r.get(stage, 0) for r in records for stage in stages):
        ax.set_yscale("log")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
