"""Benchmark figures rendered next to the TSV/text reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchReport  # noqa: E402

_OUTCOMES = (("solved", "#3b7d3b"), ("timed out", "#d08c2f"), ("unsolved", "#b5b5b5"))


def plot_report(report: BenchReport, path: str | Path) -> Path:
    """Stacked outcome shares and mean wall time per method, as one PNG."""
    path = Path(path)
    methods = [r.method for r in report.rows]
    shares = {
        "solved": [float(r.pct(r.solved)) for r in report.rows],
        "timed out": [float(r.pct(r.timed_out)) for r in report.rows],
        "unsolved": [float(r.pct(r.unsolved)) for r in report.rows],
    }
    fig, (ax_out, ax_time) = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    bottom = [0.0] * len(methods)
    for name, color in _OUTCOMES:
        ax_out.bar(methods, shares[name], bottom=bottom, color=color, label=name)
        bottom = [b + s for b, s in zip(bottom, shares[name])]
    for x, s in enumerate(shares["solved"]):
        ax_out.text(x, s / 2, f"{s:.0f}%", ha="center", va="center", color="white", fontsize=9)
    ax_out.set_ylim(0, 100)
    ax_out.set_ylabel("instances (%)")
    ax_out.legend(loc="upper center", bbox_to_anchor=(0.5, -0.12), ncol=3, fontsize=8, frameon=False)

    ax_time.bar(methods, [r.mean_time for r in report.rows], color="#4a6fa5")
    ax_time.set_ylabel("mean wall time per instance (s)")
    for ax in (ax_out, ax_time):
        ax.spines[["top", "right"]].set_visible(False)
        ax.tick_params(axis="x", labelsize=8)
    n = report.rows[0].instances if report.rows else 0
    fig.suptitle(f"{n} instances", fontsize=10)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
