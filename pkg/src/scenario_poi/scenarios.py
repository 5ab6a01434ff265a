"""Scenario labelling: user type, temporal context and spatial region."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import CheckIn, ConfigError, Trajectory

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
N_SCENARIOS = 8

DEFAULT_ACCOMMODATION = ("hotel", "hostel", "motel", "resort", "bed & breakfast")


class UserType(IntEnum):
    LOCAL = 0
    TOURIST = 1


class Temporal(IntEnum):
    WORKDAY = 0
    WEEKEND = 1


class Spatial(IntEnum):
    DOWNTOWN = 0
    SUBURBAN = 1


@dataclass(frozen=True)
class ScenarioLabel:
    user_type: UserType
    temporal: Temporal
    spatial: Spatial

    @property
    def composite(self) -> int:
        return 4 * int(self.user_type) + 2 * int(self.temporal) + int(self.spatial)

    @classmethod
    def decode(cls, composite: int) -> "ScenarioLabel":
        if not 0 <= composite < N_SCENARIOS:
            raise ValueError(f"composite scenario out of range: {composite}")
        return cls(UserType(composite >> 2), Temporal((composite >> 1) & 1), Spatial(composite & 1))

    def __str__(self) -> str:
        return f"{self.user_type.name.lower()}&{self.temporal.name.lower()}&{self.spatial.name.lower()}"


@dataclass(frozen=True)
class CityCenter:
    name: str
    lat: float
    lon: float


DEFAULT_CENTERS = (
    CityCenter("NYC", 40.7128, -74.0060),
    CityCenter("Tokyo", 35.6895, 139.6917),
)


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Pairwise great-circle distances (km) between two coordinate arrays."""
    la = np.radians(np.asarray(lat_a, dtype=float))[:, None]
    oa = np.radians(np.asarray(lon_a, dtype=float))[:, None]
    lb = np.radians(np.asarray(lat_b, dtype=float))[None, :]
    ob = np.radians(np.asarray(lon_b, dtype=float))[None, :]
    h = np.sin((lb - la) / 2) ** 2 + np.cos(la) * np.cos(lb) * np.sin((ob - oa) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def haversine_pairs(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Element-wise great-circle distances (km) between aligned coordinate arrays."""
    la, oa, lb, ob = (np.radians(np.asarray(x, dtype=float)) for x in (lat_a, lon_a, lat_b, lon_b))
    h = np.sin((lb - la) / 2) ** 2 + np.cos(la) * np.cos(lb) * np.sin((ob - oa) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def load_centers(path: str | Path) -> list[CityCenter]:
    centers = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: expected name<TAB>lat<TAB>lon")
            name, lat, lon = parts[0], float(parts[1]), float(parts[2])
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ConfigError(f"{path}:{lineno}: invalid coordinates")
            centers.append(CityCenter(name, lat, lon))
    if not centers:
        raise ConfigError(f"{path}: no city centers")
    return centers


def is_accommodation(category: str, accommodation: Iterable[str]) -> bool:
    cat = category.lower()
    return any(a.lower() in cat for a in accommodation)


def classify_user(
    checkins: Sequence[CheckIn],
    threshold: float = 0.05,
    accommodation: Iterable[str] = DEFAULT_ACCOMMODATION,
) -> UserType:
    if not checkins:
        raise ValueError("empty check-in history")
    accommodation = tuple(accommodation)
    if not accommodation:
        return UserType.LOCAL
    hits = sum(is_accommodation(c.category, accommodation) for c in checkins)
    return UserType.TOURIST if hits / len(checkins) > threshold else UserType.LOCAL


def classify_users(
    checkins: Sequence[CheckIn],
    n_users: int,
    threshold: float = 0.05,
    accommodation: Iterable[str] = DEFAULT_ACCOMMODATION,
) -> list[UserType]:
    accommodation = tuple(accommodation)
    if not accommodation or not any(c.category for c in checkins):
        logger.warning("no category data or accommodation list; every user labelled local")
        return [UserType.LOCAL] * n_users
    history: list[list[CheckIn]] = [[] for _ in range(n_users)]
    for c in checkins:
        history[c.user_id].append(c)
    return [classify_user(h, threshold, accommodation) if h else UserType.LOCAL for h in history]


def classify_temporal(trajectory: Trajectory) -> Temporal:
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least one input and a target")
    local = datetime.fromtimestamp(trajectory.last_input.local_time, tz=timezone.utc)
    return Temporal.WEEKEND if local.weekday() >= 5 else Temporal.WORKDAY


def nearest_center_km(lat: float, lon: float, centers: Sequence[CityCenter]) -> float:
    if not centers:
        raise ConfigError("empty city center set")
    return min(haversine_km((lat, lon), (c.lat, c.lon)) for c in centers)


def classify_location(
    lat: float, lon: float, centers: Sequence[CityCenter], radius_km: float = 10.0
) -> Spatial:
    return Spatial.DOWNTOWN if nearest_center_km(lat, lon, centers) <= radius_km else Spatial.SUBURBAN


def classify_spatial(
    trajectory: Trajectory, centers: Sequence[CityCenter], radius_km: float = 10.0
) -> Spatial:
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least one input and a target")
    last = trajectory.last_input
    return classify_location(last.lat, last.lon, centers, radius_km)


def classify_trajectory(
    trajectory: Trajectory,
    user_types: Sequence[UserType],
    centers: Sequence[CityCenter],
    radius_km: float = 10.0,
) -> ScenarioLabel:
    return ScenarioLabel(
        user_types[trajectory.user_id],
        classify_temporal(trajectory),
        classify_spatial(trajectory, centers, radius_km),
    )


def poi_regions(lats, lons, centers: Sequence[CityCenter], radius_km: float = 10.0) -> np.ndarray:
    """Region per POI from its own coordinates (0 downtown, 1 suburban)."""
    if not centers:
        raise ConfigError("empty city center set")
    if len(lats) == 0:
        return np.zeros(0, dtype=np.int64)
    d = haversine_matrix(lats, lons, [c.lat for c in centers], [c.lon for c in centers]).min(axis=1)
    return np.where(d <= radius_km, int(Spatial.DOWNTOWN), int(Spatial.SUBURBAN)).astype(np.int64)
