"""Map and report rendering (matplotlib, file output only).

Map plots show node positions and connections over the input capture
positions, optionally coloring nodes by class. Every node and edge carries a
stable SVG group id (node-<id>, edge-<a>-<b>) so emitted figures stay
machine-checkable.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.lines import Line2D

from .evaluation import EvalReport
from .map_builder import TopologicalMap

_NODE_RADIUS = 0.09


def plot_map(
    topo: TopologicalMap,
    out_path,
    node_labels: dict[int, str] | None = None,
    input_positions=None,
    title: str | None = None,
) -> None:
    """Render nodes, edges, and optional class colors to an image file.

    The format follows the file suffix (.svg by default use). Input capture
    positions, when given, draw underneath as small gray dots.
    """
    fig, ax = plt.subplots(figsize=(7, 6))
    if input_positions is not None:
        pts = np.asarray(input_positions, dtype=np.float64).reshape(-1, 2)
        ax.scatter(pts[:, 0], pts[:, 1], s=4, c="0.8", linewidths=0, zorder=1, label="inputs")
    positions = topo.node_positions()
    for a, b in sorted(topo.edges):
        line = Line2D(
            [positions[a, 0], positions[b, 0]],
            [positions[a, 1], positions[b, 1]],
            color="0.2",
            linewidth=1.0,
            zorder=2,
        )
        line.set_gid(f"edge-{a}-{b}")
        ax.add_line(line)
    color_of = _label_colors(node_labels)
    for node in topo.nodes:
        circle = plt.Circle(
            (positions[node.id, 0], positions[node.id, 1]),
            radius=_NODE_RADIUS,
            facecolor=color_of(node.id),
            edgecolor="black",
            linewidth=0.8,
            zorder=3,
        )
        circle.set_gid(f"node-{node.id}")
        ax.add_patch(circle)
    if node_labels:
        seen = sorted(set(node_labels.values()))
        handles = [
            Line2D([], [], marker="o", linestyle="", markersize=8,
                   markerfacecolor=_class_color(seen.index(name)), markeredgecolor="black",
                   label=name)
            for name in seen
        ]
        ax.legend(handles=handles, loc="best", fontsize=8)
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.margins(0.1)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.savefig(Path(out_path), bbox_inches="tight")
    plt.close(fig)


def _class_color(index: int):
    cmap = plt.get_cmap("tab10")
    return cmap(index % 10)


def _label_colors(node_labels: dict[int, str] | None):
    if not node_labels:
        return lambda node_id: "tab:blue"
    names = sorted(set(node_labels.values()))
    return lambda node_id: (
        _class_color(names.index(node_labels[node_id])) if node_id in node_labels else "0.6"
    )


def render_report_figure(report: EvalReport, out_path) -> None:
    """Companion figure for a report: metric means with std error bars.

    Over-time reports render as a curve against the instant number; other
    protocols as a labeled bar chart.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [row.name for row in report.metrics]
    means = [row.mean for row in report.metrics]
    stds = [row.std for row in report.metrics]
    if report.protocol == "place-over-time":
        x = np.arange(1, len(names) + 1)
        ax.errorbar(x, means, yerr=stds, marker="o", capsize=3)
        ax.set_xticks(list(x))
        ax.set_xlabel("instant")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0.0, 1.05)
    else:
        x = np.arange(len(names))
        ax.bar(x, means, yerr=stds, capsize=3, color=[_class_color(i) for i in range(len(names))])
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_title(f"{report.protocol} (seed {report.seed})")
    fig.tight_layout()
    fig.savefig(Path(out_path))
    plt.close(fig)
