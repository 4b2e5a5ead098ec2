"""Figure output: image grids for sweeps/comparisons and schedule plots.

All figures render through the Agg backend straight to files.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schedules import (
    RESOLUTION_RAMP_END,
    STAGE1_END,
    STAGE2_END,
    TRAINING_END,
    lambda_preg,
    neural_resolution,
    schedule_table,
    swap_probability,
)


def save_image_grid(images, path, titles=None, ncols=None) -> None:
    """Write a grid of float [0, 1] images to one figure file."""
    n = len(images)
    if n == 0:
        raise ValueError("no images to plot")
    ncols = ncols or min(n, 4)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3 * ncols, 3 * nrows), squeeze=False)
    for i in range(nrows * ncols):
        ax = axes[i // ncols][i % ncols]
        ax.axis("off")
        if i < n:
            img = np.clip(np.asarray(images[i]), 0.0, 1.0)
            ax.imshow(img, cmap="gray" if img.ndim == 2 else None)
            if titles:
                ax.set_title(titles[i], fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_schedules(path) -> None:
    """Curves of the training schedule over the whole run, one panel each."""
    t = np.linspace(0, TRAINING_END, 2001)
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)

    axes[0].plot(t / 1e6, [lambda_preg(x) for x in t])
    axes[0].set_ylabel("pose-reg weight")
    axes[1].plot(t / 1e6, [swap_probability(x) for x in t])
    axes[1].set_ylabel("swap probability")
    axes[2].plot(t / 1e6, [neural_resolution(x) for x in t])
    axes[2].set_ylabel("render resolution")
    axes[2].set_xlabel("images seen (millions)")
    for ax in axes:
        for boundary in (STAGE1_END, STAGE2_END, RESOLUTION_RAMP_END):
            ax.axvline(boundary / 1e6, color="gray", ls=":", lw=0.8)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_schedule_csv(path, rows=None) -> None:
    """Delimited dump of the schedule table (defaults to the breakpoints)."""
    rows = rows if rows is not None else schedule_table()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
