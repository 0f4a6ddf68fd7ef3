"""Figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def loss_curve(log: list[tuple[int, float, float]], path: str | Path) -> Path:
    steps = np.array([r[0] for r in log])
    loss = np.array([r[1] for r in log])
    psnr = np.array([r[2] for r in log], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(steps, loss, color="tab:blue", lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss", color="tab:blue")
    twin = ax.twinx()
    twin.plot(steps, psnr, color="tab:orange", lw=1)
    twin.set_ylabel("batch PSNR (dB)", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def contact_sheet(images: list[np.ndarray], titles: list[str], path: str | Path, cols: int = 5) -> Path:
    if not images:
        raise ValueError("no frames to lay out")
    rows = -(-len(images) // cols)
    cols = min(cols, len(images))
    fig, axes = plt.subplots(rows, cols, figsize=(2 * cols, 2.2 * rows), squeeze=False)
    for ax in axes.flat:
        ax.axis("off")
    for ax, img, title in zip(axes.flat, images, titles):
        ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
        ax.set_title(title, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
