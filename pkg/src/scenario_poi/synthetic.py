"""Synthetic check-in corpora with planted scenario-specific behaviour.

Used by the test-suite and for desk-scale demonstrations; nothing here is
needed to train on real data.
"""
from __future__ import annotations

import math
from datetime import datetime, timezone

import numpy as np

from .ingest import Catalog, CheckIn
from .scenarios import DEFAULT_CENTERS

DAY = 86400.0
# Monday 2012-04-02 00:00 UTC
EPOCH0 = datetime(2012, 4, 2, tzinfo=timezone.utc).timestamp()


def _offset(lat: float, lon: float, km_north: float, km_east: float) -> tuple[float, float]:
    dlat = km_north / 111.195
    dlon = km_east / (111.195 * math.cos(math.radians(lat)))
    return lat + dlat, lon + dlon


def planted_corpus(
    n_users: int = 500,
    n_pois: int = 300,
    days_per_user: int = 12,
    clusters_per_region: int = 5,
    hot_size: int = 5,
    follow: float = 0.8,
    tourist_share: float = 0.3,
    downtown_share: float = 0.6,
    seed: int = 0,
) -> tuple[list[CheckIn], Catalog, dict]:
    """A 2x2x2-scenario corpus around the default NYC center.

    POIs sit in tight spatial clusters, half of them downtown (< 8 km from
    the center) and half suburban (> 14 km). For every (user type, temporal
    context, cluster) a "hot set" of ``hot_size`` POIs of that cluster is
    drawn; each next check-in is taken from the hot set of the current
    scenario and cluster with probability ``follow`` and uniformly from the
    region otherwise. Tourists also check in at hotels often enough to be
    labelled as such.
    """
    rng = np.random.default_rng(seed)
    center = DEFAULT_CENTERS[0]
    catalog = Catalog()

    n_down = n_pois // 2
    regions = np.array([0] * n_down + [1] * (n_pois - n_down))
    n_clusters = 2 * clusters_per_region
    cluster_of = np.empty(n_pois, dtype=np.int64)
    coords = np.empty((n_pois, 2))
    anchors = []
    for r in (0, 1):
        for k in range(clusters_per_region):
            angle = 2 * math.pi * (k + rng.uniform(0, 0.3)) / clusters_per_region
            radius = rng.uniform(2.0, 7.0) if r == 0 else rng.uniform(15.0, 30.0)
            anchors.append(_offset(center.lat, center.lon, radius * math.sin(angle), radius * math.cos(angle)))
    for r in (0, 1):
        members = np.flatnonzero(regions == r)
        for j, p in enumerate(members):
            c = r * clusters_per_region + j % clusters_per_region
            cluster_of[p] = c
            lat, lon = anchors[c]
            coords[p] = _offset(lat, lon, rng.normal(0, 0.4), rng.normal(0, 0.4))

    hotels = set()
    for r in (0, 1):
        members = np.flatnonzero(regions == r)
        hotels.update(rng.choice(members, size=max(1, len(members) // 15), replace=False).tolist())
    is_hotel = np.isin(np.arange(n_pois), sorted(hotels))
    categories = ["Hotel" if p in hotels else f"Category {p % 12}" for p in range(n_pois)]
    for p in range(n_pois):
        catalog.poi_index(f"v{p}", float(coords[p, 0]), float(coords[p, 1]), categories[p])

    # hot[user_type][temporal][cluster] -> POIs of that cluster
    hot = np.empty((2, 2, n_clusters, hot_size), dtype=np.int64)
    for ut in (0, 1):
        for tp in (0, 1):
            for c in range(n_clusters):
                cluster_members = np.flatnonzero((cluster_of == c) & ~is_hotel)
                hot[ut, tp, c] = rng.choice(cluster_members, size=hot_size, replace=len(cluster_members) < hot_size)
    hot_weights = np.arange(hot_size, 0, -1, dtype=float)
    hot_weights /= hot_weights.sum()

    checkins: list[CheckIn] = []
    user_types = (rng.random(n_users) < tourist_share).astype(np.int64)
    hotel_list = sorted(hotels)
    for u in range(n_users):
        catalog.user_index(f"u{u}")
        ut = int(user_types[u])
        days = np.sort(rng.choice(np.arange(120), size=days_per_user, replace=False))
        for day in days:
            tp = 1 if (day % 7) >= 5 else 0
            region = 0 if rng.random() < downtown_share else 1
            members = np.flatnonzero((regions == region) & ~is_hotel)
            length = int(rng.integers(3, 6))
            if ut == 1 and rng.random() < 0.5:
                region_hotels = [h for h in hotel_list if regions[h] == region]
                cur = int(rng.choice(region_hotels))
            else:
                cur = int(rng.choice(members))
            t = EPOCH0 + day * DAY + rng.uniform(7, 10) * 3600
            seq = [cur]
            for _ in range(length - 1):
                if rng.random() < follow:
                    cur = int(rng.choice(hot[ut, tp, cluster_of[cur]], p=hot_weights))
                else:
                    cur = int(rng.choice(members))
                seq.append(cur)
            for p in seq:
                checkins.append(CheckIn(u, p, float(t), float(coords[p, 0]), float(coords[p, 1]), categories[p], 0))
                t += rng.uniform(0.5, 2.5) * 3600
    checkins.sort(key=lambda c: (c.user_id, c.timestamp))
    truth = {"hot": hot, "cluster_of": cluster_of, "regions": regions, "user_types": user_types}
    return checkins, catalog, truth


def random_corpus(
    n_users: int = 200,
    n_pois: int = 1000,
    days_per_user: int = 10,
    box_km: float = 40.0,
    seed: int = 0,
) -> tuple[list[CheckIn], Catalog]:
    """Structureless check-ins: POIs uniform in a box around NYC, visits uniform at random."""
    rng = np.random.default_rng(seed)
    center = DEFAULT_CENTERS[0]
    catalog = Catalog()
    for p in range(n_pois):
        lat, lon = _offset(center.lat, center.lon, *rng.uniform(-box_km / 2, box_km / 2, size=2))
        catalog.poi_index(f"v{p}", float(lat), float(lon), "Hotel" if p % 40 == 0 else f"Category {p % 9}")
    checkins = []
    for u in range(n_users):
        catalog.user_index(f"u{u}")
        for day in np.sort(rng.choice(np.arange(200), size=days_per_user, replace=False)):
            t = EPOCH0 + day * DAY + rng.uniform(6, 12) * 3600
            for p in rng.integers(0, n_pois, size=int(rng.integers(2, 6))):
                poi = catalog.pois[int(p)]
                checkins.append(CheckIn(u, int(p), float(t), poi.lat, poi.lon, poi.category, 0))
                t += rng.uniform(0.3, 2.0) * 3600
    checkins.sort(key=lambda c: (c.user_id, c.timestamp))
    return checkins, catalog


def opposing_corpus(n_repeats: int = 6) -> tuple[list[CheckIn], Catalog]:
    """One local user, two downtown POIs, two temporal scenarios.

    Workday trajectories go p0 -> p1 and weekend trajectories go p0 -> p0,
    so with everything but one gate held fixed the two scenarios pull that
    gate in exactly opposite directions.
    """
    center = DEFAULT_CENTERS[0]
    catalog = Catalog()
    catalog.user_index("solo")
    for name, (dn, de) in (("p0", (0.5, 0.0)), ("p1", (0.0, 0.8))):
        lat, lon = _offset(center.lat, center.lon, dn, de)
        catalog.poi_index(name, lat, lon, "Office")
    checkins = []
    week = 0
    for k in range(n_repeats):
        for day, target in ((2, 1), (5, 0)):  # Wednesday, Saturday
            t = EPOCH0 + (7 * week + day) * DAY + 10 * 3600
            for i, p in enumerate((0, target)):
                poi = catalog.pois[p]
                checkins.append(CheckIn(0, p, t + i * 3600, poi.lat, poi.lon, poi.category, 0))
        week += 1
    return checkins, catalog


def write_raw(checkins: list[CheckIn], catalog: Catalog, path, format: str = "foursquare") -> None:
    """Dump a corpus in one of the raw formats understood by ``parse_checkins``."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in checkins:
            poi = catalog.pois[c.poi_id]
            user = catalog.users[c.user_id]
            when = datetime.fromtimestamp(c.timestamp, tz=timezone.utc)
            if format == "foursquare":
                cat_id = poi.category.lower().replace(" ", "_") or "none"
                stamp = when.strftime("%a %b %d %H:%M:%S +0000 %Y")
                fh.write(f"{user}\t{poi.external_id}\t{cat_id}\t{poi.category}\t"
                         f"{poi.lat!r}\t{poi.lon!r}\t{c.tz_offset}\t{stamp}\n")
            elif format == "gowalla":
                fh.write(f"{user}\t{when.strftime('%Y-%m-%dT%H:%M:%SZ')}\t{poi.lat!r}\t{poi.lon!r}\t{poi.external_id}\n")
            else:
                raise ValueError(f"unknown format {format!r}")
