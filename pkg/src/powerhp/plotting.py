"""Report figures rendered next to the delimited outputs.

Kept deliberately small: one figure for the 1-D landscape curves and one
summary figure per benchmark run.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analysis import CurveSample  # noqa: E402


def plot_curves(curve_sets, path, show_g: bool = True) -> None:
    """Overlay smoothed-surrogate curves for several (power, sigma) pairs.

    ``curve_sets`` is a sequence of (power, sigma, samples) triples; the
    plain smoothed objective from the first set is drawn once for reference.
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if show_g and curve_sets:
        _, _, samples = curve_sets[0]
        ax.plot([s.mu for s in samples], [s.g_value for s in samples],
                "k--", lw=1.2, label="G")
    for power, sigma, samples in curve_sets:
        ax.plot([s.mu for s in samples], [s.f_value for s in samples],
                lw=1.4, label=f"F (N={power:g}, σ={sigma:g})")
    ax.set_xlabel("μ")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_aggregate(report, path) -> None:
    """Success-rate and mean-metric bars for one protocol run."""
    methods = [m.display for m in report.spec.methods]
    srs = [report.per_method[m].success_rate for m in methods]
    means = [report.per_method[m].mean_metric for m in methods]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.bar(methods, srs, color="tab:blue")
    ax1.set_ylabel("success rate")
    ax1.set_ylim(0, 1)
    ax2.bar(methods, means, color="tab:orange")
    ax2.set_ylabel("mean best metric")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", rotation=30)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle(f"{report.spec.problem_kind} "
                 f"({report.spec.n_trials} trials, T={report.spec.T})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_trajectories(records_by_method, path) -> None:
    """Validation-score traces over the scored iterates of one trial."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, records in records_by_method.items():
        pts = [(r.t, r.validation) for r in records if r.validation is not None]
        if pts:
            ts, vs = zip(*pts)
            ax.plot(ts, vs, lw=1.0, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("validation score")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
