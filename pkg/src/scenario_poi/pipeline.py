"""Prepared-data bundle: ingest + scenario labels + splits, persisted as text files."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hypergraph import GraphSet, build_graph_set
from .manifest import MANIFEST_NAME, RunManifest, read_manifest, sha256_file
from .ingest import (
    Catalog,
    CheckIn,
    ConfigError,
    Trajectory,
    chronological_split,
    filter_checkins,
    parse_checkins,
    segment_trajectories,
)
from .scenarios import (
    DEFAULT_ACCOMMODATION,
    DEFAULT_CENTERS,
    CityCenter,
    ScenarioLabel,
    UserType,
    classify_trajectory,
    classify_users,
    poi_regions,
)

logger = logging.getLogger(__name__)

PREPARED_VERSION = 1


@dataclass
class PreparedData:
    catalog: Catalog
    train: list[Trajectory]
    test: list[Trajectory]
    train_labels: list[ScenarioLabel]
    test_labels: list[ScenarioLabel]
    user_types: list[UserType]
    poi_region: np.ndarray
    centers: list[CityCenter]

    @property
    def train_scenarios(self) -> list[int]:
        return [lab.composite for lab in self.train_labels]

    @property
    def test_scenarios(self) -> list[int]:
        return [lab.composite for lab in self.test_labels]

    def poi_coords(self) -> np.ndarray:
        return np.array([[p.lat, p.lon] for p in self.catalog.pois], dtype=float).reshape(-1, 2)

    def build_graphs(self, train: Sequence[Trajectory] | None = None,
                     labels: Sequence[ScenarioLabel] | None = None,
                     geo_threshold_km: float = 2.5, merged: bool = False) -> GraphSet:
        train = self.train if train is None else train
        labels = self.train_labels if labels is None else labels
        coords = self.poi_coords()
        return build_graph_set(
            train, labels, self.user_types, self.catalog.n_users,
            coords[:, 0], coords[:, 1], self.poi_region, geo_threshold_km, merged,
        )


def label_data(
    checkins: Sequence[CheckIn],
    catalog: Catalog,
    centers: Sequence[CityCenter] = DEFAULT_CENTERS,
    ratio: float = 0.8,
    tourist_threshold: float = 0.05,
    radius_km: float = 10.0,
    accommodation: Sequence[str] = DEFAULT_ACCOMMODATION,
) -> PreparedData:
    user_types = classify_users(checkins, catalog.n_users, tourist_threshold, accommodation)
    train, test = chronological_split(segment_trajectories(checkins), ratio)
    coords = np.array([[p.lat, p.lon] for p in catalog.pois], dtype=float).reshape(-1, 2)
    return PreparedData(
        catalog=catalog,
        train=train,
        test=test,
        train_labels=[classify_trajectory(t, user_types, centers, radius_km) for t in train],
        test_labels=[classify_trajectory(t, user_types, centers, radius_km) for t in test],
        user_types=user_types,
        poi_region=poi_regions(coords[:, 0], coords[:, 1], centers, radius_km),
        centers=list(centers),
    )


def prepare_from_file(
    path: str | Path,
    format: str,
    centers: Sequence[CityCenter] | None = None,
    tz_offset: int = 0,
    min_user: int = 0,
    min_poi: int = 0,
    **kwargs,
) -> PreparedData:
    if format == "gowalla" and centers is None:
        raise ConfigError("gowalla data needs a city centers file (--centers)")
    checkins, catalog = parse_checkins(path, format, tz_offset)
    checkins, catalog = filter_checkins(checkins, catalog, min_user, min_poi)
    return label_data(checkins, catalog, centers or DEFAULT_CENTERS, **kwargs)


def _traj_line(tid: int, split: str, t: Trajectory, label: ScenarioLabel) -> str:
    cks = ",".join(f"{c.poi_id}@{c.timestamp!r}@{c.tz_offset}" for c in t.checkins)
    return f"{tid}\t{t.user_id}\t{split}\t{t.window_start!r}\t{label.composite}\t{cks}\n"


def save_prepared(data: PreparedData, out: str | Path, geo_threshold_km: float = 2.5,
                  source: str | Path | None = None, settings: dict | None = None) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data.catalog.save(out)
    with open(out / "trajectories.tsv", "w", encoding="utf-8") as fh:
        tid = 0
        for split, trajs, labels in (("train", data.train, data.train_labels), ("test", data.test, data.test_labels)):
            for t, lab in zip(trajs, labels):
                fh.write(_traj_line(tid, split, t, lab))
                tid += 1
    with open(out / "scenarios.tsv", "w", encoding="utf-8") as fh:
        for tid, lab in enumerate([*data.train_labels, *data.test_labels]):
            fh.write(f"{tid}\t{lab.composite}\n")
    with open(out / "user_types.tsv", "w", encoding="utf-8") as fh:
        for u, ut in enumerate(data.user_types):
            fh.write(f"{u}\t{ut.name.lower()}\n")
    with open(out / "poi_regions.tsv", "w", encoding="utf-8") as fh:
        for p, r in enumerate(data.poi_region):
            fh.write(f"{p}\t{'downtown' if r == 0 else 'suburban'}\n")
    with open(out / "centers.tsv", "w", encoding="utf-8") as fh:
        for c in data.centers:
            fh.write(f"{c.name}\t{c.lat!r}\t{c.lon!r}\n")
    data.build_graphs(geo_threshold_km=geo_threshold_km).export(out / "graphs")
    RunManifest(
        kind="prepared",
        version=PREPARED_VERSION,
        config={"geo_threshold_km": geo_threshold_km, **(settings or {})},
        inputs={"dataset": sha256_file(source) if source else None},
        extra={
            "users": data.catalog.n_users,
            "pois": data.catalog.n_pois,
            "train_trajectories": len(data.train),
            "test_trajectories": len(data.test),
        },
    ).write(out)


def load_prepared(directory: str | Path) -> PreparedData:
    directory = Path(directory)
    if not (directory / MANIFEST_NAME).exists():
        raise ConfigError(f"{directory} is not a prepared directory (no {MANIFEST_NAME})")
    manifest = read_manifest(directory)
    if manifest.get("kind") != "prepared" or manifest.get("version") != PREPARED_VERSION:
        raise ConfigError(f"{directory}: unsupported prepared-data version {manifest.get('version')!r}")
    catalog = Catalog.load(directory)
    user_types = []
    with open(directory / "user_types.tsv", encoding="utf-8") as fh:
        for line in fh:
            user_types.append(UserType[line.rstrip("\n").split("\t")[1].upper()])
    regions = []
    with open(directory / "poi_regions.tsv", encoding="utf-8") as fh:
        for line in fh:
            regions.append(0 if line.rstrip("\n").split("\t")[1] == "downtown" else 1)
    centers = []
    with open(directory / "centers.tsv", encoding="utf-8") as fh:
        for line in fh:
            name, lat, lon = line.rstrip("\n").split("\t")
            centers.append(CityCenter(name, float(lat), float(lon)))
    data = PreparedData(catalog, [], [], [], [], user_types, np.asarray(regions, dtype=np.int64), centers)
    with open(directory / "trajectories.tsv", encoding="utf-8") as fh:
        for line in fh:
            _tid, user, split, start, comp, cks = line.rstrip("\n").split("\t")
            u = int(user)
            checkins = []
            for item in cks.split(","):
                poi, ts, off = item.split("@")
                p = catalog.pois[int(poi)]
                checkins.append(CheckIn(u, int(poi), float(ts), p.lat, p.lon, p.category, int(off)))
            t = Trajectory(u, tuple(checkins), float(start))
            label = ScenarioLabel.decode(int(comp))
            if split == "train":
                data.train.append(t)
                data.train_labels.append(label)
            else:
                data.test.append(t)
                data.test_labels.append(label)
    return data
