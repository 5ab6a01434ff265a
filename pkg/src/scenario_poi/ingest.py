"""Check-in parsing, catalog construction, trajectory segmentation and splits."""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

WINDOW_SECONDS = 24 * 3600
TIME_SLOTS = 48


class ParseError(ValueError):
    """A malformed input line. Carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CheckIn:
    user_id: int
    poi_id: int
    timestamp: float
    lat: float
    lon: float
    category: str = ""
    # minutes east of UTC; local time = timestamp + 60 * tz_offset
    tz_offset: int = 0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")

    @property
    def local_time(self) -> float:
        return self.timestamp + 60.0 * self.tz_offset


@dataclass(frozen=True)
class Trajectory:
    user_id: int
    checkins: tuple[CheckIn, ...]
    window_start: float

    def __post_init__(self):
        if not self.checkins:
            raise ValueError("empty trajectory")
        ts = [c.timestamp for c in self.checkins]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("check-ins not sorted by timestamp")
        if any(c.user_id != self.user_id for c in self.checkins):
            raise ValueError("mixed users in trajectory")
        if ts[0] < self.window_start or ts[-1] >= self.window_start + WINDOW_SECONDS:
            raise ValueError("check-in outside the 24h window")

    def __len__(self) -> int:
        return len(self.checkins)

    @property
    def inputs(self) -> tuple[CheckIn, ...]:
        return self.checkins[:-1]

    @property
    def target(self) -> CheckIn:
        return self.checkins[-1]

    @property
    def last_input(self) -> CheckIn:
        return self.checkins[-2]


@dataclass(frozen=True)
class POI:
    external_id: str
    lat: float
    lon: float
    category: str = ""


@dataclass
class Catalog:
    users: list[str] = field(default_factory=list)
    pois: list[POI] = field(default_factory=list)
    time_slots: int = TIME_SLOTS
    _user_index: dict[str, int] = field(default_factory=dict, repr=False)
    _poi_index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_pois(self) -> int:
        return len(self.pois)

    def user_index(self, external_id: str) -> int:
        idx = self._user_index.get(external_id)
        if idx is None:
            idx = self._user_index[external_id] = len(self.users)
            self.users.append(external_id)
        return idx

    def poi_index(self, external_id: str, lat: float, lon: float, category: str = "") -> int:
        idx = self._poi_index.get(external_id)
        if idx is None:
            idx = self._poi_index[external_id] = len(self.pois)
            self.pois.append(POI(external_id, lat, lon, category))
        return idx

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "pois.tsv", "w", encoding="utf-8") as fh:
            for i, p in enumerate(self.pois):
                fh.write(f"{i}\t{p.external_id}\t{p.lat!r}\t{p.lon!r}\t{p.category}\n")
        with open(directory / "users.tsv", "w", encoding="utf-8") as fh:
            for i, u in enumerate(self.users):
                fh.write(f"{i}\t{u}\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Catalog":
        directory = Path(directory)
        cat = cls()
        with open(directory / "users.tsv", encoding="utf-8") as fh:
            for expected, line in enumerate(fh):
                idx, ext = line.rstrip("\n").split("\t")
                if int(idx) != expected or cat.user_index(ext) != expected:
                    raise ConfigError(f"users.tsv: non-dense or duplicate index at row {expected}")
        with open(directory / "pois.tsv", encoding="utf-8") as fh:
            for expected, line in enumerate(fh):
                idx, ext, lat, lon, category = line.rstrip("\n").split("\t")
                if int(idx) != expected or cat.poi_index(ext, float(lat), float(lon), category) != expected:
                    raise ConfigError(f"pois.tsv: non-dense or duplicate index at row {expected}")
        return cat


def _parse_foursquare(fields: list[str]) -> tuple[str, str, str, float, float, int, float]:
    if len(fields) != 8:
        raise ValueError(f"expected 8 tab-separated fields, got {len(fields)}")
    user, venue, _cat_id, cat_name, lat, lon, offset, utc = fields
    ts = datetime.strptime(utc.strip(), "%a %b %d %H:%M:%S %z %Y").timestamp()
    return user, venue, cat_name, float(lat), float(lon), int(float(offset)), ts


def _parse_gowalla(fields: list[str], tz_offset: int) -> tuple[str, str, str, float, float, int, float]:
    if len(fields) != 5:
        raise ValueError(f"expected 5 tab-separated fields, got {len(fields)}")
    user, when, lat, lon, loc = fields
    when = when.strip()
    if when.endswith("Z"):
        when = when[:-1] + "+00:00"
    dt = datetime.fromisoformat(when)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return user, loc, "", float(lat), float(lon), tz_offset, dt.timestamp()


def parse_checkins(
    path: str | Path, format: str, tz_offset: int = 0
) -> tuple[list[CheckIn], Catalog]:
    """Read a raw check-in dump.

    ``format`` is ``"foursquare"`` (8 fields, per-line timezone offset) or
    ``"gowalla"`` (5 fields, no categories; ``tz_offset`` minutes applied to
    every record). Catalog indices follow first appearance in the file. The
    returned list is ordered by user index, then timestamp.
    """
    if format not in ("foursquare", "gowalla"):
        raise ConfigError(f"unknown check-in format {format!r}")
    catalog = Catalog()
    records: list[CheckIn] = []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                fields = line.split("\t")
                if format == "foursquare":
                    user, poi, cat, lat, lon, off, ts = _parse_foursquare(fields)
                else:
                    user, poi, cat, lat, lon, off, ts = _parse_gowalla(fields, tz_offset)
                if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                    raise ValueError(f"coordinates out of range ({lat}, {lon})")
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            u = catalog.user_index(user)
            p = catalog.poi_index(poi, lat, lon, cat)
            records.append(CheckIn(u, p, ts, lat, lon, cat, off))
    # sorted() is stable, so equal timestamps keep file order
    records.sort(key=lambda c: (c.user_id, c.timestamp))
    return records, catalog


def filter_checkins(
    checkins: Sequence[CheckIn], catalog: Catalog, min_user: int = 0, min_poi: int = 0
) -> tuple[list[CheckIn], Catalog]:
    """Drop rare POIs, then rare users, and re-index densely (order preserved)."""
    if min_user <= 0 and min_poi <= 0:
        return list(checkins), catalog
    poi_counts = Counter(c.poi_id for c in checkins)
    kept = [c for c in checkins if poi_counts[c.poi_id] >= min_poi]
    user_counts = Counter(c.user_id for c in kept)
    kept = [c for c in kept if user_counts[c.user_id] >= min_user]

    # re-index by original first-appearance order
    new = Catalog()
    for u in sorted({c.user_id for c in kept}):
        new.user_index(catalog.users[u])
    for p in sorted({c.poi_id for c in kept}):
        poi = catalog.pois[p]
        new.poi_index(poi.external_id, poi.lat, poi.lon, poi.category)
    out = [
        CheckIn(
            new._user_index[catalog.users[c.user_id]],
            new._poi_index[catalog.pois[c.poi_id].external_id],
            c.timestamp, c.lat, c.lon, c.category, c.tz_offset,
        )
        for c in kept
    ]
    out.sort(key=lambda c: (c.user_id, c.timestamp))
    return out, new


def segment_trajectories(checkins: Iterable[CheckIn], min_length: int = 2) -> list[Trajectory]:
    """Cut each user's history into 24h windows.

    A window opens at the first check-in not covered by the previous window
    and spans [start, start + 24h). Windows with fewer than ``min_length``
    check-ins are discarded.
    """
    by_user: dict[int, list[CheckIn]] = defaultdict(list)
    for c in checkins:
        by_user[c.user_id].append(c)
    out: list[Trajectory] = []
    for user in sorted(by_user):
        history = by_user[user]
        start = None
        window: list[CheckIn] = []
        for c in history:
            if start is None or c.timestamp >= start + WINDOW_SECONDS:
                if start is not None and len(window) >= min_length:
                    out.append(Trajectory(user, tuple(window), start))
                start, window = c.timestamp, []
            window.append(c)
        if start is not None and len(window) >= min_length:
            out.append(Trajectory(user, tuple(window), start))
    return out


def chronological_split(
    trajectories: Sequence[Trajectory], ratio: float = 0.8
) -> tuple[list[Trajectory], list[Trajectory]]:
    """Per user, the earliest ceil(ratio * n) trajectories train; the rest test."""
    by_user: dict[int, list[Trajectory]] = defaultdict(list)
    for t in trajectories:
        by_user[t.user_id].append(t)
    train, test = [], []
    for user in sorted(by_user):
        seq = sorted(by_user[user], key=lambda t: t.window_start)
        # round() guards against ratio*n landing a hair above an integer
        n_train = math.ceil(round(ratio * len(seq), 9))
        train.extend(seq[:n_train])
        test.extend(seq[n_train:])
    return train, test


def validation_split(
    train: Sequence[Trajectory], fraction: float = 0.1
) -> tuple[list[Trajectory], list[Trajectory]]:
    """Hold out the last floor(fraction * n) training trajectories of each user."""
    by_user: dict[int, list[Trajectory]] = defaultdict(list)
    for t in train:
        by_user[t.user_id].append(t)
    fit, val = [], []
    for user in sorted(by_user):
        seq = sorted(by_user[user], key=lambda t: t.window_start)
        n_val = int(math.floor(round(fraction * len(seq), 9)))
        n_val = min(n_val, len(seq) - 1)
        fit.extend(seq[: len(seq) - n_val])
        val.extend(seq[len(seq) - n_val:])
    return fit, val
