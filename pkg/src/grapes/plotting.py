"""Figures rendered next to the tab-separated outputs of ``compare`` and ``diagnostics``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _none_to_nan(values) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=np.float64)


def plot_f1_curves(curves: dict[str, list[list[float]]], path) -> Path:
    """Validation F1 per epoch, one line per sampler: mean over seeds with a ±1 std band."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, runs in sorted(curves.items()):
        if not runs or not runs[0]:
            continue
        arr = np.array([_none_to_nan(r) for r in runs])
        mean = np.nanmean(arr, axis=0)
        std = np.nanstd(arr, axis=0)
        epochs = np.arange(len(mean))
        ax.plot(epochs, mean, label=name)
        ax.fill_between(epochs, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation micro-F1")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_diagnostics(records: list[dict], path) -> Path:
    """Per-layer mean entropy (with std band) and per-class label skew over epochs."""
    fig, (ax_h, ax_l) = plt.subplots(1, 2, figsize=(10, 4))
    epochs = np.array([r["epoch"] for r in records])
    if records:
        mean = np.array([_none_to_nan(r["entropy_mean"]) for r in records])
        std = np.array([_none_to_nan(r["entropy_std"]) for r in records])
        for l in range(mean.shape[1]):
            ax_h.plot(epochs, mean[:, l], label=f"layer {l + 1}")
            ax_h.fill_between(epochs, mean[:, l] - std[:, l], mean[:, l] + std[:, l], alpha=0.2)
        diff = np.array([_none_to_nan(r["label_diff"]) for r in records])
        for c in range(diff.shape[1]):
            ax_l.plot(epochs, diff[:, c], label=f"class {c}")
        ax_h.legend()
        ax_l.legend()
    ax_h.set_xlabel("epoch")
    ax_h.set_ylabel("entropy (bits)")
    ax_l.set_xlabel("epoch")
    ax_l.set_ylabel("graph fraction minus sampled fraction")
    ax_l.axhline(0.0, color="grey", linewidth=0.5)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
