"""Figure rendering for evaluation reports and training runs.

Writes files only (headless Agg backend): a confusion-matrix heatmap next
to the CSV output, and loss/accuracy curves for a training history.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ConfusionMatrix
from .train import TrainHistory


def plot_confusion(cm: ConfusionMatrix, path, normalize: bool = True, title: str | None = None) -> None:
    """Render a confusion-matrix heatmap (rows gold, columns predicted)."""
    counts = cm.counts.astype(np.float64)
    if normalize:
        rowsum = counts.sum(axis=1, keepdims=True)
        cells = np.divide(counts, rowsum, out=np.zeros_like(counts), where=rowsum > 0)
    else:
        cells = counts
    k = len(cm.labels)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * k + 2.0),) * 2)
    im = ax.imshow(cells, cmap="Blues", vmin=0.0, vmax=cells.max() if cells.max() > 0 else 1.0)
    ax.set_xticks(range(k), cm.labels, rotation=45, ha="right")
    ax.set_yticks(range(k), cm.labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    if title:
        ax.set_title(title)
    threshold = 0.6 * cells.max() if cells.max() > 0 else 1.0
    for i in range(k):
        for j in range(k):
            text = f"{cells[i, j]:.2f}" if normalize else f"{int(cells[i, j])}"
            ax.text(j, i, text, ha="center", va="center",
                    color="white" if cells[i, j] > threshold else "black", fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_curves(history: TrainHistory, path, title: str | None = None) -> None:
    """Render train/dev loss per epoch, with dev accuracy on a second axis."""
    epochs = np.arange(1, len(history.train_losses) + 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(epochs, history.train_losses, label="train loss", color="#0F2080")
    if history.dev_losses:
        ax.plot(epochs, history.dev_losses, label="dev loss", color="#F5793A")
    if history.best_epoch:
        ax.axvline(history.best_epoch, color="grey", linestyle="--", linewidth=1,
                   label=f"best epoch ({history.best_epoch})")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    if history.dev_accuracies:
        acc_ax = ax.twinx()
        acc_ax.plot(epochs, history.dev_accuracies, label="dev accuracy", color="#85C0F9")
        acc_ax.set_ylabel("dev accuracy")
        acc_ax.set_ylim(0.0, 1.0)
        handles, labels = ax.get_legend_handles_labels()
        acc_handles, acc_labels = acc_ax.get_legend_handles_labels()
        ax.legend(handles + acc_handles, labels + acc_labels, loc="center right", fontsize=8)
    else:
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
