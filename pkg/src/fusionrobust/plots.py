"""Report figures rendered next to the delimited outputs.

Kept out of the analysis and training modules on purpose: figures are a
presentation concern of the command-line report path.  Uses the Agg
backend so runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corruption import RobustnessReport
from .training import TraceRow


def render_trace_figure(trace: list[TraceRow], path):
    """Loss curve split by phase (clean vs corrupted iterations)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for phase, color in (("clean", "tab:blue"), ("corrupt", "tab:red")):
        xs = [r.iteration for r in trace if r.phase == phase]
        ys = [r.loss for r in trace if r.phase == phase]
        if xs:
            ax.plot(xs, ys, ".", markersize=2, color=color, label=phase, alpha=0.6)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(loc="upper right")
    ax.set_title("training loss by phase")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_robustness_figure(report: RobustnessReport, path, title=""):
    """Bar chart: clean, per-source-corrupted, and all-source metrics with CIs."""
    labels = ["clean"]
    means = [report.clean_metric.mean]
    errs = [0.0]
    for i, m in enumerate(report.per_source_metric):
        labels.append(f"src {i + 1} corrupted")
        means.append(m.mean)
        errs.append(0.0 if np.isnan(m.half_width) else m.half_width)
    labels.append("all corrupted")
    means.append(report.asn_metric.mean)
    errs.append(
        0.0 if np.isnan(report.asn_metric.half_width) else report.asn_metric.half_width
    )

    fig, ax = plt.subplots(figsize=(7, 4))
    xs = np.arange(len(labels))
    ax.bar(xs, means, yerr=errs, capsize=4, color="tab:gray")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(report.metric_kind)
    ax.axhline(report.min_metric, linestyle="--", color="tab:red", label="min metric")
    ax.legend(loc="lower left")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
