"""Report figures rendered to files next to the CSV artifacts.

Everything draws through the Agg backend so the CLI works headless; the
CSVs remain the source of truth, these are the human-readable companions.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

plt.rcParams.update({"figure.dpi": 110, "font.size": 9,
                     "axes.grid": True, "grid.alpha": 0.3})


def save_training_curves(rows, path):
    """Loss and accuracy curves over epochs from metrics rows."""
    epochs = [r["epoch"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.0))
    ax1.plot(epochs, [r["train_loss"] for r in rows], color="tab:red")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax2.plot(epochs, [r["train_acc"] for r in rows], label="train")
    ax2.plot(epochs, [r["eval_acc"] for r in rows], label="held-out")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.02)
    ax2.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_confusion(confusion, names, path):
    """Confusion-matrix heatmap with per-cell counts."""
    confusion = np.asarray(confusion)
    n = confusion.shape[0]
    fig, ax = plt.subplots(figsize=(1.0 + 0.75 * n, 0.8 + 0.7 * n))
    ax.imshow(confusion, cmap="Blues")
    ax.set_xticks(range(n), labels=names, rotation=45, ha="right")
    ax.set_yticks(range(n), labels=names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.grid(False)
    vmax = confusion.max() if confusion.size else 1
    for i in range(n):
        for j in range(n):
            ax.text(j, i, str(confusion[i, j]), ha="center", va="center",
                    color="white" if confusion[i, j] > vmax / 2 else "black")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_attention_heatmap(matrix, path, joint_names=None):
    """Per-layer attention scores: time on the y axis, joints on the x axis."""
    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(0.9 + 0.35 * matrix.shape[1], 3.2))
    im = ax.imshow(matrix, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("joint")
    ax.set_ylabel("time step")
    ax.grid(False)
    if joint_names:
        ax.set_xticks(range(len(joint_names)), labels=joint_names,
                      rotation=90, fontsize=6)
    fig.colorbar(im, ax=ax, label="attention score")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
