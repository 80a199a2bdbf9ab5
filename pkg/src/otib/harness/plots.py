"""Static figure rendering for reports (PNG files, no interactive UI)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def alignment_heatmap(matrix, path: Path) -> None:
    counts = np.asarray(matrix.counts, dtype=float)
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * counts.shape[1], 1.0 + 0.5 * counts.shape[0]))
    im = ax.imshow(counts, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(matrix.columns)))
    ax.set_xticklabels(matrix.columns, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(counts.shape[0]))
    ax.set_yticklabels([f"code {i}" for i in range(counts.shape[0])], fontsize=8)
    ax.set_xlabel("ground-truth primitive")
    ax.set_ylabel("learned code")
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            if counts[i, j] > 0:
                ax.text(j, i, int(counts[i, j]), ha="center", va="center",
                        color="white", fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def scaling_curve(payload: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    by_temp: dict[float, list] = {}
    for point in payload["points"]:
        by_temp.setdefault(point["temperature"], []).append(point)
    for temp, points in sorted(by_temp.items()):
        points = sorted(points, key=lambda p: p["budget"])
        budgets = [p["budget"] for p in points]
        ax.plot(budgets, [p["transferability"] for p in points],
                marker="o", label=f"transfer (T={temp})")
        ax.plot(budgets, [p["self_explainability"] for p in points],
                marker="s", linestyle="--", alpha=0.6, label=f"self (T={temp})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("sampling budget B")
    lower_better = payload.get("score_kind") == "l1_distance"
    ax.set_ylabel("mean L1 (lower better)" if lower_better else "accuracy")
    ax.set_title(f"test-time scaling ({payload.get('regime', '')})")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def explanation_length_curve(records: list[dict], path: Path, gt_length: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    epochs = [r["epoch"] for r in records]
    ax.plot(epochs, [r["mean_selected_length"] for r in records], label="selected length")
    if gt_length is not None:
        ax.axhline(gt_length, linestyle="--", color="gray", label="ground truth mean")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean explanation length")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
