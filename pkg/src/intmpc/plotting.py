"""SVG charts rendered from the evaluation CSV tables."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

OUTCOME_COLUMNS = ("success_pct", "collision_pct", "timeout_pct")
COLORS = {"success_pct": "#4c9a2a", "collision_pct": "#c0392b", "timeout_pct": "#7f8c8d"}


def read_table(path) -> tuple[list, list]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    return rows[0], rows[1:]


def plot_outcomes(csv_path, svg_path, title: str | None = None) -> Path:
    """Grouped bars of the outcome percentages, one group per table row."""
    header, rows = read_table(csv_path)
    missing = [c for c in OUTCOME_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{csv_path}: missing columns {missing}")
    first = header.index(OUTCOME_COLUMNS[0])
    labels = [" ".join(r[:first]) for r in rows]
    plt.rcParams["svg.hashsalt"] = "intmpc"
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 2.0), 3.5))
    width = 0.8 / len(OUTCOME_COLUMNS)
    for j, col in enumerate(OUTCOME_COLUMNS):
        idx = header.index(col)
        vals = [float(r[idx]) for r in rows]
        xs = [i + (j - 1) * width for i in range(len(rows))]
        ax.bar(xs, vals, width, label=col.replace("_pct", ""), color=COLORS[col])
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("episodes [%]")
    ax.set_ylim(0, 100)
    ax.set_title(title or Path(csv_path).stem)
    ax.legend(fontsize=8)
    fig.tight_layout()
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return svg_path


def plot_histogram(edges, counts, svg_path, title: str = "cooperation of merge follower") -> Path:
    plt.rcParams["svg.hashsalt"] = "intmpc"
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.bar(edges[:-1], counts, width=[b - a for a, b in zip(edges[:-1], edges[1:])],
           align="edge", color="#2c7fb8", edgecolor="black")
    ax.set_xlabel("cooperation coefficient")
    ax.set_ylabel("successful episodes")
    ax.set_title(title)
    fig.tight_layout()
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return svg_path
