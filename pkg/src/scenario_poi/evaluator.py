"""Ranking metrics per scenario slice, category-share deltas and distance histograms."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .scenarios import N_SCENARIOS, ScenarioLabel, haversine_pairs

logger = logging.getLogger(__name__)

KS = (1, 5, 10, 20)
DISTANCE_BINS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, np.inf)


def target_ranks(scores: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """1-based rank of each target; equal scores rank lower POI indices first."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    targets = np.asarray(targets, dtype=np.int64)
    t = scores[np.arange(len(targets)), targets][:, None]
    better = (scores > t).sum(axis=1)
    cols = np.arange(scores.shape[1])[None, :]
    tied_before = ((scores == t) & (cols < targets[:, None])).sum(axis=1)
    return 1 + better + tied_before


def acc_mrr(ranks: Sequence[int], ks: Sequence[int] = KS) -> dict[str, float] | None:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        return None
    out = {f"acc@{k}": float(np.mean(ranks <= k)) for k in ks}
    out["mrr"] = float(np.mean(1.0 / ranks))
    out["count"] = int(ranks.size)
    return out


def slice_masks(scenarios: Sequence[int]) -> dict[str, np.ndarray]:
    s = np.asarray(scenarios, dtype=np.int64)
    masks = {
        "overall": np.ones(len(s), dtype=bool),
        "local": (s >> 2) == 0,
        "tourist": (s >> 2) == 1,
        "downtown": (s & 1) == 0,
        "suburban": (s & 1) == 1,
        "workday": ((s >> 1) & 1) == 0,
        "weekend": ((s >> 1) & 1) == 1,
    }
    for k in range(N_SCENARIOS):
        masks[f"c{k}:{ScenarioLabel.decode(k)}"] = s == k
    return masks


@dataclass
class MetricsReport:
    slices: dict[str, dict[str, float] | None] = field(default_factory=dict)

    def __getitem__(self, key: str) -> dict[str, float] | None:
        return self.slices[key]

    def to_json(self) -> str:
        return json.dumps(self.slices, indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        cols = [f"acc@{k}" for k in KS] + ["mrr", "count"]
        lines = ["slice," + ",".join(cols)]
        for name, m in self.slices.items():
            if m is None:
                lines.append(f"{name}," + ",".join([""] * len(cols)))
            else:
                lines.append(f"{name}," + ",".join(repr(m[c]) for c in cols))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(json.loads(text))


def slice_report(ranks: Sequence[int], scenarios: Sequence[int]) -> MetricsReport:
    ranks = np.asarray(ranks, dtype=np.int64)
    return MetricsReport({name: acc_mrr(ranks[m]) for name, m in slice_masks(scenarios).items()})


def _proportions(labels: Sequence[str]) -> dict[str, float]:
    if len(labels) == 0:
        return {}
    values, counts = np.unique(np.asarray(labels, dtype=object).astype(str), return_counts=True)
    return {str(v): float(c) / len(labels) for v, c in zip(values, counts)}


def category_delta(
    predicted: Sequence[int],
    targets: Sequence[int],
    poi_categories: Sequence[str],
    scenarios: Sequence[int],
) -> dict[str, dict[str, dict[str, float]]] | None:
    """Predicted minus true category share of top-1 predictions, per user-type slice.

    Returns None when the catalog carries no categories.
    """
    if not any(poi_categories):
        logger.warning("no POI categories available; category delta skipped")
        return None
    cats = np.asarray(poi_categories, dtype=object)
    predicted = np.asarray(predicted, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    masks = slice_masks(scenarios)
    out = {}
    for name in ("overall", "local", "tourist"):
        m = masks[name]
        if not m.any():
            continue
        pred = _proportions(cats[predicted[m]])
        true = _proportions(cats[targets[m]])
        keys = sorted(set(pred) | set(true))
        out[name] = {
            k: {"predicted": pred.get(k, 0.0), "true": true.get(k, 0.0), "delta": pred.get(k, 0.0) - true.get(k, 0.0)}
            for k in keys
        }
    return out


def distance_hist(
    predicted: Sequence[int],
    targets: Sequence[int],
    origins: np.ndarray,
    poi_coords: np.ndarray,
    scenarios: Sequence[int],
    bins: Sequence[float] = DISTANCE_BINS,
) -> dict[str, dict[str, list[float]]]:
    """Distance (km) from the last input check-in to the predicted / true next POI.

    ``origins`` is (T, 2) lat/lon, ``poi_coords`` is (N, 2). Masses per bin,
    per spatial slice.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    poi_coords = np.asarray(poi_coords, dtype=float).reshape(-1, 2)

    def dist(idx):
        return haversine_pairs(origins[:, 0], origins[:, 1], poi_coords[idx, 0], poi_coords[idx, 1])

    d_pred, d_true = dist(predicted), dist(targets)
    edges = np.asarray(bins, dtype=float)
    masks = slice_masks(scenarios)
    out = {"bins": {"edges": [float(e) for e in edges]}}
    for name in ("overall", "downtown", "suburban"):
        m = masks[name]
        if not m.any():
            continue
        hp, _ = np.histogram(d_pred[m], bins=edges)
        ht, _ = np.histogram(d_true[m], bins=edges)
        out[name] = {"predicted": (hp / m.sum()).tolist(), "true": (ht / m.sum()).tolist()}
    return out


def write_category_csv(delta: Mapping, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("slice,category,predicted,true,delta\n")
        for slice_name, cats in delta.items():
            for cat, v in cats.items():
                fh.write(f"{slice_name},{cat.replace(',', ' ')},{v['predicted']!r},{v['true']!r},{v['delta']!r}\n")


def write_distance_csv(hist: Mapping, path: str | Path) -> None:
    edges = hist["bins"]["edges"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("slice,series,bin_lo_km,bin_hi_km,mass\n")
        for slice_name, series in hist.items():
            if slice_name == "bins":
                continue
            for kind in ("predicted", "true"):
                for lo, hi, mass in zip(edges[:-1], edges[1:], series[kind]):
                    fh.write(f"{slice_name},{kind},{lo!r},{hi!r},{mass!r}\n")
