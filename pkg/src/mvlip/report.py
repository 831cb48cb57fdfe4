"""Figure rendering for score/attend/compress reports."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import FrameImportance, ViewImportanceTable
from .dataio import FrameAlignment
from .metrics import EvalReport


def save_confusion_figure(report: EvalReport, path: str | Path,
                          normalized: bool = True) -> None:
    """Heatmap of the viseme confusion matrix (rows = reference class)."""
    mat = report.confusion_normalized() if normalized else report.confusion
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    im = ax.imshow(mat, cmap="Blues", vmin=0.0)
    classes = list(report.classes)
    ax.set_xticks(range(len(classes)), classes)
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted viseme")
    ax.set_ylabel("reference viseme")
    ax.set_title("viseme confusion" + (" (row-normalized)" if normalized else ""))
    for i in range(len(classes)):
        for j in range(len(classes)):
            v = mat[i, j]
            if v > 0:
                ax.text(j, i, f"{v:.2f}" if normalized else str(int(v)),
                        ha="center", va="center", fontsize=6,
                        color="white" if v > 0.5 * mat.max() else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_frame_importance_figure(
    importance: FrameImportance,
    top: Sequence[int],
    path: str | Path,
    alignment: Optional[FrameAlignment] = None,
) -> None:
    """Per-frame attention mass with the selected top frames highlighted."""
    T = len(importance.normalized)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * T), 3.2))
    colors = ["gold" if t in set(top) else "lightsteelblue" for t in range(T)]
    ax.bar(range(T), importance.normalized, color=colors, edgecolor="gray")
    ax.set_xlabel("frame")
    ax.set_ylabel("normalized attention mass")
    ax.set_title(f"{importance.clip_id}: important frames")
    if alignment is not None:
        ax.set_xticks(range(T), alignment.labels, fontsize=7)
        for b in alignment.word_boundaries:
            ax.axvline(b - 0.5, color="tab:blue", linestyle=":", linewidth=1.2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_view_importance_figure(table: ViewImportanceTable, path: str | Path) -> None:
    """Mean view weight per viseme class, one row per class."""
    classes = sorted(table.mean_weights)
    if not classes:
        raise ValueError("no emitted classes to plot")
    mat = np.stack([table.mean_weights[c] for c in classes])
    fig, ax = plt.subplots(figsize=(4.8, 0.5 + 0.4 * len(classes)))
    im = ax.imshow(mat, cmap="viridis", aspect="auto", vmin=0.0)
    ax.set_xticks(range(len(table.angles)), [f"{a}\N{DEGREE SIGN}" for a in table.angles])
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("view")
    ax.set_title("mean view weight per viseme")
    for i, c in enumerate(classes):
        for j, angle in enumerate(table.angles):
            mark = "*" if angle in table.significant[c] else ""
            ax.text(j, i, f"{mat[i, j]:.2f}{mark}", ha="center", va="center",
                    fontsize=7, color="white" if mat[i, j] < 0.6 * mat.max() else "black")
    fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_curve(history, path: str | Path) -> None:
    """Loss (and validation VER when present) against epochs."""
    epochs = [st.epoch for st in history]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(epochs, [st.train_loss for st in history], label="train loss",
            color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    vers = [(st.epoch, st.val_ver) for st in history if st.val_ver is not None]
    if vers:
        ax2 = ax.twinx()
        ax2.plot(*zip(*vers), label="val VER", color="tab:red")
        ax2.set_ylabel("VER")
        ax2.set_ylim(0, None)
    fig.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
