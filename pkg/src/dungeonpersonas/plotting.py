"""Matplotlib figures for reports: visit heatmaps and fitness curves."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .maps import LevelMap  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_PNG_METADATA = {"Software": None}


def render_heatmap(grid, level: LevelMap | None, path, title: str | None = None) -> Path:
    """Draw a visit-count grid; walls are grey, the exit and spawn are marked."""
    counts = np.asarray(grid, dtype=float)
    fig, ax = plt.subplots(figsize=(3.2, 5.6))
    masked = np.ma.masked_array(counts, mask=np.zeros_like(counts, dtype=bool))
    if level is not None:
        walls = np.asarray(level.walls, dtype=bool).reshape(counts.shape)
        masked.mask = walls
    cmap = plt.get_cmap("inferno").copy()
    cmap.set_bad("#9a9a9a")
    im = ax.imshow(masked, cmap=cmap, interpolation="nearest", vmin=0,
                   vmax=max(1.0, float(counts.max())))
    if level is not None:
        for pos, mark in ((level.hero_spawn, "H"), (level.exit, "E")):
            r, c = divmod(pos, counts.shape[1])
            ax.text(c, r, mark, ha="center", va="center", color="cyan", fontsize=8, weight="bold")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.06, pad=0.03, label="visits")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def plot_fitness_history(histories, path, title: str | None = None) -> Path:
    """One line pair (best and mean fitness) per run; ``histories`` is a list of
    lists of :class:`~dungeonpersonas.evolution.GenerationStats`."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for i, hist in enumerate(histories):
        gens = [h.generation for h in hist]
        line, = ax.plot(gens, [h.best for h in hist], label=f"run {i} best")
        ax.plot(gens, [h.mean for h in hist], linestyle="--", color=line.get_color(),
                alpha=0.6, label=f"run {i} mean")
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    return path
