"""Static report figures (SVG).

Output is made byte-stable for a given input: fixed hash salt, no date
metadata.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .data import GROUP_NAMES  # noqa: E402

GROUP_COLORS = {
    "GENDER": "#9e9e9e",
    "G1": "#4e79a7",
    "G2": "#f28e2b",
    "G3": "#e15759",
    "G4": "#76b7b2",
    "G5": "#59a14f",
    "G6": "#edc948",
}

STYLE = {
    "svg.hashsalt": "voxsel",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.titlesize": 11,
}


def _label(tag: str) -> str:
    name = GROUP_NAMES.get(tag)
    return f"{tag} ({name})" if name and tag != "GENDER" else (name or tag)


def pie_axes(ax, fractions: Mapping[str, float], title: str) -> None:
    tags = [t for t, v in fractions.items() if v > 0]
    vals = [fractions[t] for t in tags]
    colors = [GROUP_COLORS.get(t, "#bab0ac") for t in tags]
    ax.pie(vals, labels=[_label(t) for t in tags], colors=colors, autopct="%1.1f%%",
           startangle=90, counterclock=False, wedgeprops={"linewidth": 0.8, "edgecolor": "white"})
    ax.set_title(title)
    ax.axis("equal")


def save_pies(
    panels: Sequence[tuple[str, Mapping[str, float]]], path: str | Path, suptitle: str | None = None
) -> Path:
    """One pie per (title, fractions) panel, side by side, written as SVG."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(5.0 * len(panels), 4.6), squeeze=False)
        for ax, (title, fractions) in zip(axes[0], panels):
            if fractions:
                pie_axes(ax, fractions, title)
            else:
                ax.set_axis_off()
                ax.set_title(f"{title}\n(no data)")
        if suptitle:
            fig.suptitle(suptitle)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def save_mcc_strip(scores: Mapping[str, Sequence[float]], path: str | Path) -> Path:
    """Per-repetition MCC, one column per configuration."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(scores), 4.0))
        names = list(scores)
        ax.boxplot([list(scores[n]) for n in names], showmeans=True)
        ax.set_xticks(range(1, len(names) + 1), names, rotation=30, ha="right")
        ax.set_ylabel("MCC")
        ax.set_ylim(-1.05, 1.05)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
