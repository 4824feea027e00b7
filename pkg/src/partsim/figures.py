"""Figure rendering for CLI reports.

Each report command that writes delimited output can also render a PNG next
to it.  The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_connectivity_curve(points, path) -> None:
    """Line plot of algebraic connectivity against sampled neighbor count."""
    ks = [k for k, _ in points]
    values = [v for _, v in points]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ks, values, marker="o", lw=1.5)
    ax.set_xlabel("neighbors kept per item")
    ax.set_ylabel("algebraic connectivity")
    ax.axhline(0.0, color="grey", lw=0.8, ls=":")
    ax.set_title("Sampled item-graph connectivity")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_metric_bars(rows, metrics, path, title="") -> None:
    """Grouped bars, one group per row label, one bar per metric.

    ``rows`` is a list of (label, {metric: value}) pairs.
    """
    labels = [label for label, _ in rows]
    x = range(len(labels))
    width = 0.8 / max(len(metrics), 1)
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(labels), 3.4))
    for j, metric in enumerate(metrics):
        vals = [values.get(metric, 0.0) for _, values in rows]
        ax.bar([i + j * width for i in x], vals, width=width, label=metric)
    ax.set_xticks([i + width * (len(metrics) - 1) / 2 for i in x])
    ax.set_xticklabels(labels, rotation=15, ha="right")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_partition_sizes(sizes, tau, n_items, path) -> None:
    """Bar chart of partition sizes with the tau * n_items cap marked."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(range(len(sizes)), sorted(sizes, reverse=True), color="#4878b0")
    ax.axhline(tau * n_items, color="firebrick", lw=1.0, ls="--",
               label=f"cap {tau:g} x {n_items}")
    ax.set_xlabel("partition (sorted by size)")
    ax.set_ylabel("items")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_stage_timings(stages, path) -> None:
    """Horizontal bars of per-stage wall-clock seconds."""
    names = list(stages)
    seconds = [stages[name] for name in names]
    fig, ax = plt.subplots(figsize=(5, 0.6 + 0.5 * len(names)))
    ax.barh(range(len(names)), seconds, color="#4878b0")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("seconds")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
