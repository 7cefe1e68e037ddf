"""Figures written next to the CSV/JSON outputs of the CLI.

Everything renders with the Agg backend straight to files; nothing here
opens a window.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "savefig.dpi": 150,
}

SAMPLE_COLOR = "#c0392b"
REFERENCE_COLOR = "#2c3e50"


def _figure(width: float = 5.0, height: float | None = None, ncols: int = 1):
    height = height or width * GOLDEN
    return plt.subplots(1, ncols, figsize=(width, height), squeeze=False)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def loss_curve(rows: Sequence[dict], path, window: int = 50) -> Path:
    """Per-step NLL with a trailing moving average."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax = ax[0, 0]
        steps = np.array([r["step"] for r in rows])
        nll = np.array([r["nll"] for r in rows], dtype=float)
        ax.plot(steps, nll, lw=0.6, alpha=0.4, color=REFERENCE_COLOR, label="batch")
        if nll.size >= 2:
            w = min(window, nll.size)
            sm = np.convolve(nll, np.ones(w) / w, mode="valid")
            ax.plot(steps[w - 1:], sm, lw=1.4, color=SAMPLE_COLOR, label=f"mean of {w}")
        ax.set_xlabel("step")
        ax.set_ylabel("NLL per unit weight")
        ax.legend()
        return _save(fig, path)


def _mean_hist(hists: Sequence[np.ndarray]) -> np.ndarray:
    width = max(np.asarray(h).size for h in hists)
    out = np.zeros(width)
    for h in hists:
        out[:np.asarray(h).size] += h
    return out / len(hists)


def stat_comparison(sample_stats, reference_stats, path, metrics=("degree", "clustering", "spectral", "orbit")) -> Path:
    """One panel per metric: mean histogram of samples against the reference."""
    with plt.rc_context(STYLE):
        fig, axes = _figure(3.2 * len(metrics), 2.8, ncols=len(metrics))
        for ax, m in zip(axes[0], metrics):
            a = _mean_hist([s.metric(m) for s in sample_stats])
            b = _mean_hist([s.metric(m) for s in reference_stats])
            width = max(a.size, b.size)
            a, b = np.pad(a, (0, width - a.size)), np.pad(b, (0, width - b.size))
            if m == "clustering":
                x, xlabel = np.linspace(0, 1, width, endpoint=False), "local clustering"
            elif m == "spectral":
                x, xlabel = np.linspace(0, 2, width, endpoint=False), "eigenvalue"
            elif m == "orbit":
                x, xlabel = np.arange(width), "orbit"
            else:
                x, xlabel = np.arange(width), "degree"
            if m == "orbit":
                ax.bar(x - 0.2, b, 0.4, color=REFERENCE_COLOR, label="reference")
                ax.bar(x + 0.2, a, 0.4, color=SAMPLE_COLOR, label="samples")
            else:
                ax.step(x, b, where="post", color=REFERENCE_COLOR, label="reference")
                ax.step(x, a, where="post", color=SAMPLE_COLOR, label="samples")
            ax.set_xlabel(xlabel)
            ax.set_title(m)
        axes[0, 0].legend()
        return _save(fig, path)


def hierarchy_summary(level_rows: Sequence[dict], path) -> Path:
    """Community counts and largest community per level for an inspected dataset."""
    with plt.rc_context(STYLE):
        fig, axes = _figure(7.0, 2.6, ncols=2)
        levels = [r["level"] for r in level_rows]
        axes[0, 0].plot(levels, [r["mean_nodes"] for r in level_rows], "o-", color=REFERENCE_COLOR)
        axes[0, 0].set_yscale("log")
        axes[0, 0].set_xlabel("level")
        axes[0, 0].set_ylabel("mean node count")
        inner = [r for r in level_rows if "max_community" in r]
        axes[0, 1].plot([r["level"] for r in inner], [r["max_community"] for r in inner], "s-", color=SAMPLE_COLOR)
        axes[0, 1].set_xlabel("level")
        axes[0, 1].set_ylabel("largest community")
        for ax in axes[0]:
            ax.set_xticks(levels)
        return _save(fig, path)


def modularity_boxes(sample_q: Sequence[float], reference_q: Sequence[float], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = _figure(3.2, 2.8)
        ax = ax[0, 0]
        ax.boxplot([list(reference_q), list(sample_q)], widths=0.5)
        ax.set_xticks([1, 2], ["reference", "samples"])
        ax.set_ylabel("Louvain modularity")
        return _save(fig, path)
