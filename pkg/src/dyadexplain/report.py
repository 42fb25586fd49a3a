"""SVG figures: cluster scatter on PCA axes and the active-user sweep curves.

Output is byte-stable for identical inputs (fixed SVG id salt, no date stamp).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"svg.hashsalt": "dyadexplain", "svg.fonttype": "none"}


def _save(fig, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def cluster_scatter_svg(xy, labels, tags: Sequence[Sequence[str]], path, title: str = "") -> Path:
    """Points coloured by centroid; the legend carries each centroid's top terms."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 5))
        cmap = plt.get_cmap("tab10")
        for j, t in enumerate(tags):
            mask = labels == j
            ax.scatter(xy[mask, 0], xy[mask, 1], s=14, color=cmap(j % 10),
                       label=f"{j}: {', '.join(t) if t else '-'}")
        ax.set_xlabel("PC 1")
        ax.set_ylabel("PC 2")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7, loc="best")
        fig.tight_layout()
    return _save(fig, path)


def sweep_svg(rows: Sequence[dict], path, x: str = "active_users",
              series: Sequence[str] = ("auc_pr", "auc_roc", "recall", "precision")) -> Path:
    """Metric curves against the swept value; failed runs are left out."""
    ok = sorted((r for r in rows if not r.get("error")), key=lambda r: r[x])
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [r[x] for r in ok]
        for name in series:
            ys = [r[name] for r in ok]
            ax.plot(xs, [math.nan if y is None else y for y in ys], marker="o", label=name)
        ax.set_xlabel(x.replace("_", " "))
        ax.set_ylim(0, 1)
        ax.legend(fontsize=8)
        fig.tight_layout()
    return _save(fig, path)
