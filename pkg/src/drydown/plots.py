"""Figure rendering for the report path.

All figures are written as SVG next to the delimited outputs. The SVG
backend is pinned (fixed hashsalt, no embedded date) so reruns differ only
by the matplotlib version string the backend always writes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "drydown"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def save_growth_curve(curve, path):
    """Before/after view of the post-processing chain for one plant."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    left.plot(curve.days, curve.raw, "o-", color="tab:gray", ms=4, label="raw prediction")
    left.set_title("raw")
    right.plot(curve.days, curve.raw, "o", color="tab:gray", ms=4, alpha=0.5, label="raw")
    right.plot(curve.days, curve.smoothed, "-", color="tab:blue", label="smoothed")
    right.plot(curve.days, curve.monotone, "-", color="tab:green", lw=2, label="monotone")
    right.set_title("smoothed + monotone")
    for ax in (left, right):
        ax.set_xlabel("day")
    left.set_ylabel("leaf area (mm$^2$)")
    right.legend(fontsize=8)
    fig.suptitle(f"plant {curve.plant.label} ({curve.plant.genotype}, {curve.plant.treatment})")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_scatter(observed, predicted, path, xlabel="observed area (mm$^2$)",
                 ylabel="predicted area (mm$^2$)"):
    """Predicted vs observed with the 1:1 line."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(observed, predicted, s=12, alpha=0.5, color="tab:blue")
    lo = min(min(observed), min(predicted))
    hi = max(max(observed), max(predicted))
    ax.plot([lo, hi], [lo, hi], "-", color="tab:gray", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_method_comparison(comparisons, path):
    """One panel per process: method A estimates vs method B, 1:1 line."""
    n = max(len(comparisons), 1)
    fig, axes = plt.subplots(1, n, figsize=(4.5 * n, 4.5), squeeze=False)
    for ax, comparison in zip(axes[0], comparisons):
        a = [row[1] for row in comparison.paired]
        b = [row[2] for row in comparison.paired]
        ax.scatter(a, b, color="tab:blue")
        for genotype, xa, xb in comparison.paired:
            ax.annotate(genotype, (xa, xb), fontsize=7, xytext=(3, 3),
                        textcoords="offset points")
        lo, hi = min(a + b), max(a + b)
        pad = 0.05 * (hi - lo) if hi > lo else 0.5
        ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "-", color="tab:gray", lw=1)
        ax.set_title(f"{comparison.process}  (R = {comparison.r:.2f})")
        ax.set_xlabel("method A estimate")
        ax.set_ylabel("method B estimate")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
