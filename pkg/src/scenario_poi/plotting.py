"""Report figures written straight to image files (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps PNG bytes reproducible between runs.
_SAVE_KW = {"dpi": 100, "metadata": {"Software": None}}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_slice_metrics(slices: Mapping[str, Mapping[str, float] | None], path: str | Path,
                       metrics: Sequence[str] = ("acc@1", "acc@5", "acc@10", "mrr")) -> Path:
    names = [n for n, m in slices.items() if m is not None and not n.startswith("c")]
    x = np.arange(len(names))
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for i, metric in enumerate(metrics):
        ax.bar(x + i * width, [slices[n][metric] for n in names], width, label=metric)
    ax.set_xticks(x + width * (len(metrics) - 1) / 2)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.legend(ncol=len(metrics), fontsize="small", frameon=False)
    return _save(fig, path)


def plot_category_delta(delta: Mapping[str, Mapping[str, Mapping[str, float]]], path: str | Path,
                        top: int = 12) -> Path:
    """Horizontal bars of predicted minus true category share, one panel per slice."""
    panels = list(delta)
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 4), squeeze=False)
    for ax, name in zip(axes[0], panels):
        cats = delta[name]
        # largest true shares first, keeps the panel readable
        keys = sorted(cats, key=lambda k: (-cats[k]["true"], k))[:top]
        vals = [cats[k]["delta"] for k in keys]
        colors = ["tab:red" if v < 0 else "tab:blue" for v in vals]
        ax.barh(np.arange(len(keys)), vals, color=colors)
        ax.set_yticks(np.arange(len(keys)))
        ax.set_yticklabels(keys, fontsize="small")
        ax.invert_yaxis()
        ax.axvline(0, color="k", lw=0.8)
        ax.set_title(name)
        ax.set_xlabel("predicted - true share")
    return _save(fig, path)


def plot_distance_hist(hist: Mapping, path: str | Path) -> Path:
    edges = hist["bins"]["edges"]
    labels = [f"{lo:g}-{hi:g}" if np.isfinite(hi) else f"{lo:g}+" for lo, hi in zip(edges[:-1], edges[1:])]
    panels = [k for k in hist if k != "bins"]
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2), squeeze=False)
    x = np.arange(len(labels))
    for ax, name in zip(axes[0], panels):
        ax.bar(x - 0.2, hist[name]["predicted"], 0.4, label="predicted")
        ax.bar(x + 0.2, hist[name]["true"], 0.4, label="true")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, fontsize="small")
        ax.set_xlabel("km from last input check-in")
        ax.set_title(name)
    axes[0][0].set_ylabel("share")
    axes[0][0].legend(frameon=False)
    return _save(fig, path)


def plot_losses(rows: Sequence[tuple], path: str | Path) -> Path:
    """Per-step final loss, one line per scenario. ``rows`` as in losses.csv."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    by_s: dict[int, list[tuple[int, float]]] = {}
    for row in rows:
        by_s.setdefault(int(row[2]), []).append((int(row[1]), float(row[-1])))
    for s, pts in sorted(by_s.items()):
        steps, vals = zip(*pts)
        ax.plot(steps, vals, lw=1, label=f"c{s}")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if by_s:
        ax.legend(fontsize="small", ncol=4, frameon=False)
    return _save(fig, path)
