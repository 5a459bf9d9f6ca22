"""Static SVG figures: trajectory overlays and the sequencer-study curves."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

__all__ = ["plot_trajectory", "plot_sequencer_study"]

# reproducible SVG output: fixed id salt, no timestamp
matplotlib.rcParams["svg.hashsalt"] = "waynav"
_META = {"Date": None}


def _draw_world(ax, world):
    for r, c in world.obstacles:
        ax.add_patch(Rectangle((c, r), 1, 1, color="0.35"))
    for w in world.waypoints:
        ax.add_patch(Rectangle((w.col, w.row), 1, 1, fill=False, ec="tab:green", lw=1.2))
    ax.add_patch(Rectangle((world.goal.col, world.goal.row), 1, 1, fill=False, ec="tab:red", lw=1.5))
    ax.set_xlim(0, world.width)
    ax.set_ylim(0, world.height)
    ax.set_xticks(range(world.width + 1))
    ax.set_yticks(range(world.height + 1))
    ax.grid(True, lw=0.3)
    ax.set_aspect("equal")


def plot_trajectory(logs: dict, out_path, world=None, title: str = "") -> Path:
    """Overlay robot traces (``{label: EpisodeLog}``) on the reference paths of the first log."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if world is not None:
        _draw_world(ax, world)
    first = next(iter(logs.values()))
    for i, path in enumerate(first.paths):
        ax.plot(path.points[:, 0], path.points[:, 1], ":", color="goldenrod", lw=1.5,
                label="reference" if i == 0 else None)
    for label, log in logs.items():
        ax.plot(log.column("x"), log.column("y"), lw=1.3, label=f"{label} ({log.outcome})")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata=_META)
    plt.close(fig)
    return out_path


def plot_sequencer_study(summary, retained, out_dir) -> list:
    """Accuracy and relative effort versus gamma, and mean optimal orderings retained."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    curves = defaultdict(list)
    for row in summary:
        if row["method"] == "PROBABILISTIC" and row["status"] == "ok":
            curves[row["n_waypoints"]].append(
                (row["gamma"], row["accuracy"], row["mean_perms_evaluated"]))
    if curves:
        fig, ax = plt.subplots(figsize=(6, 4))
        for n, pts in sorted(curves.items()):
            pts.sort()
            g = [p[0] for p in pts]
            line, = ax.plot(g, [100 * p[1] for p in pts], "-o", label=f"{n} waypoints")
            full = max(p[2] for p in pts)
            ax.plot(g, [100 * p[2] / full for p in pts], "--", color=line.get_color())
        ax.set_xlabel("gamma (retained fraction)")
        ax.set_ylabel("accuracy (solid) / relative effort (dashed) [%]")
        ax.legend(fontsize=8)
        written.append(out_dir / "sequencer_accuracy.svg")
        fig.savefig(written[-1], format="svg", metadata=_META)
        plt.close(fig)

    counts = defaultdict(lambda: defaultdict(list))
    for row in retained:
        counts[row["n_waypoints"]][row["gamma"]].append(row["mean_optimal_retained"])
    if counts:
        fig, ax = plt.subplots(figsize=(6, 4))
        for n, by_gamma in sorted(counts.items()):
            g = sorted(by_gamma)
            ax.plot(g, [sum(by_gamma[k]) / len(by_gamma[k]) for k in g], "-o",
                    label=f"{n} waypoints")
        ax.set_xlabel("gamma (retained fraction)")
        ax.set_ylabel("optimal orderings retained (mean)")
        ax.legend(fontsize=8)
        written.append(out_dir / "retained_optimal.svg")
        fig.savefig(written[-1], format="svg", metadata=_META)
        plt.close(fig)
    return written
