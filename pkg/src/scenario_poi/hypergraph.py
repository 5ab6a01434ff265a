"""Hypergraph containers and the view-specific builders."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .ingest import TIME_SLOTS, Trajectory
from .scenarios import ScenarioLabel, Spatial, Temporal, UserType, haversine_matrix

# 30-minute slots over a local day
SLOT_MINUTES = 24 * 60 // TIME_SLOTS


@dataclass(eq=False)
class Hypergraph:
    """Undirected hypergraph over nodes 0..node_count-1.

    ``owners`` optionally tags each hyperedge with the user it came from
    (collaborative view). ``members`` optionally restricts which nodes belong
    to the graph (geographical regions); other indices exist only so that the
    graph shares the global POI index space.
    """

    node_count: int
    hyperedges: list[tuple[int, ...]]
    owners: list[int] | None = None
    members: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.hyperedges = [tuple(sorted(set(e))) for e in self.hyperedges]
        for e in self.hyperedges:
            if not e:
                raise ValueError("empty hyperedge")
            if e[0] < 0 or e[-1] >= self.node_count:
                raise ValueError(f"hyperedge {e} out of range for {self.node_count} nodes")
        if self.owners is not None and len(self.owners) != len(self.hyperedges):
            raise ValueError("owners must align with hyperedges")

    @property
    def edge_count(self) -> int:
        return len(self.hyperedges)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Binary node x hyperedge membership matrix H."""
        rows = [v for e in self.hyperedges for v in e]
        cols = [j for j, e in enumerate(self.hyperedges) for _ in e]
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.node_count, self.edge_count))

    def node_degrees(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=1)).ravel()

    def edge_sizes(self) -> np.ndarray:
        return np.array([len(e) for e in self.hyperedges], dtype=np.int64)

    def member_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        if self.members is None:
            mask[:] = True
        else:
            mask[self.members] = True
        return mask

    def export(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for j, e in enumerate(self.hyperedges):
                fh.write(f"{j}\t{','.join(map(str, e))}\n")


@dataclass(eq=False)
class DirectedHypergraph:
    node_count: int
    hyperedges: list[tuple[tuple[int, ...], tuple[int, ...]]]
    multiplicity: list[int] = field(default_factory=list)
    name: str = "transitional"

    def __post_init__(self):
        self.hyperedges = [(tuple(sorted(set(s))), tuple(sorted(set(t)))) for s, t in self.hyperedges]
        for s, t in self.hyperedges:
            if not s or not t:
                raise ValueError("directed hyperedge needs nonempty source and target sets")
            if min(s + t) < 0 or max(s + t) >= self.node_count:
                raise ValueError("directed hyperedge out of range")

    @property
    def edge_count(self) -> int:
        return len(self.hyperedges)

    def _matrix(self, side: int) -> sp.csr_matrix:
        rows = [v for e in self.hyperedges for v in e[side]]
        cols = [j for j, e in enumerate(self.hyperedges) for _ in e[side]]
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.node_count, self.edge_count))

    @cached_property
    def source_incidence(self) -> sp.csr_matrix:
        return self._matrix(0)

    @cached_property
    def target_incidence(self) -> sp.csr_matrix:
        return self._matrix(1)

    def export(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for j, (s, t) in enumerate(self.hyperedges):
                fh.write(f"{j}\t{','.join(map(str, s))}|{','.join(map(str, t))}\n")


def build_collaborative(
    train: Sequence[Trajectory],
    user_types: Sequence[UserType],
    n_pois: int,
    merged: bool = False,
) -> list[Hypergraph]:
    """One hyperedge per trajectory, routed by the owner's user type."""
    n_slices = 1 if merged else 2
    edges: list[list[tuple[int, ...]]] = [[] for _ in range(n_slices)]
    owners: list[list[int]] = [[] for _ in range(n_slices)]
    for t in train:
        k = 0 if merged else int(user_types[t.user_id])
        edges[k].append(tuple(c.poi_id for c in t.checkins))
        owners[k].append(t.user_id)
    names = ["all"] if merged else [u.name.lower() for u in UserType]
    return [
        Hypergraph(n_pois, edges[k], owners=owners[k], name=f"collaborative.{names[k]}")
        for k in range(n_slices)
    ]


def time_slot(local_seconds: float) -> int:
    minutes = int((local_seconds % 86400) // 60)
    return minutes // SLOT_MINUTES


def build_temporal(
    train: Sequence[Trajectory],
    labels: Sequence[ScenarioLabel],
    node_kind: str,
    node_count: int,
    merged: bool = False,
) -> list[Hypergraph]:
    """48 local-time slot hyperedges per temporal label; empty slots dropped.

    ``labels`` aligns with ``train``. ``node_kind`` is ``"user"`` or ``"poi"``.
    """
    if node_kind not in ("user", "poi"):
        raise ValueError(f"node_kind must be 'user' or 'poi', not {node_kind!r}")
    n_slices = 1 if merged else 2
    slots = [[set() for _ in range(TIME_SLOTS)] for _ in range(n_slices)]
    for t, label in zip(train, labels, strict=True):
        k = 0 if merged else int(label.temporal)
        for c in t.checkins:
            node = c.user_id if node_kind == "user" else c.poi_id
            slots[k][time_slot(c.local_time)].add(node)
    names = ["all"] if merged else [x.name.lower() for x in Temporal]
    return [
        Hypergraph(node_count, [tuple(s) for s in slots[k] if s], name=f"temporal_{node_kind}.{names[k]}")
        for k in range(n_slices)
    ]


def build_geographical(
    lats: Sequence[float],
    lons: Sequence[float],
    regions: np.ndarray,
    threshold_km: float = 2.5,
    merged: bool = False,
    chunk: int = 2048,
) -> list[Hypergraph]:
    """Per-POI radius balls, kept inside each POI's own region.

    Graphs live in the global POI index space; ``members`` lists the region's
    POIs and hyperedges are ordered by their center POI.
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    n = len(lats)
    region_sets = [np.arange(n)] if merged else [np.flatnonzero(regions == r) for r in (0, 1)]
    names = ["all"] if merged else [s.name.lower() for s in Spatial]
    graphs = []
    for k, members in enumerate(region_sets):
        edges = []
        for lo in range(0, len(members), chunk):
            block = members[lo:lo + chunk]
            d = haversine_matrix(lats[block], lons[block], lats[members], lons[members])
            for row, p in enumerate(block):
                ball = set(members[d[row] <= threshold_km].tolist())
                ball.add(int(p))
                edges.append(tuple(ball))
        graphs.append(Hypergraph(n, edges, members=members, name=f"geographical.{names[k]}"))
    return graphs


def build_transitional(train: Sequence[Trajectory], n_pois: int) -> DirectedHypergraph:
    """Distinct consecutive (p_i -> p_i+1) pairs, in first-seen order."""
    counts: dict[tuple[int, int], int] = {}
    for t in train:
        pois = [c.poi_id for c in t.checkins]
        for a, b in zip(pois, pois[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    pairs = list(counts)
    return DirectedHypergraph(n_pois, [((a,), (b,)) for a, b in pairs], [counts[p] for p in pairs])


@dataclass
class GraphSet:
    """The nine hypergraphs of one model (or the merged ablation set)."""

    collaborative: list[Hypergraph]
    temporal_user: list[Hypergraph]
    temporal_poi: list[Hypergraph]
    geographical: list[Hypergraph]
    transitional: DirectedHypergraph
    merged: bool = False

    def slices(self, label: ScenarioLabel) -> tuple[int, int, int]:
        """Sub-hypergraph index per (collaborative, temporal, geographical) view."""
        if self.merged:
            return 0, 0, 0
        return int(label.user_type), int(label.temporal), int(label.spatial)

    def all_graphs(self) -> list:
        return [*self.collaborative, *self.temporal_user, *self.temporal_poi, *self.geographical, self.transitional]

    def export(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for g in self.all_graphs():
            p = directory / f"{g.name}.tsv"
            g.export(p)
            paths.append(p)
        return paths


def build_graph_set(
    train: Sequence[Trajectory],
    labels: Sequence[ScenarioLabel],
    user_types: Sequence[UserType],
    n_users: int,
    poi_lats: Sequence[float],
    poi_lons: Sequence[float],
    poi_region: np.ndarray,
    geo_threshold_km: float = 2.5,
    merged: bool = False,
) -> GraphSet:
    n_pois = len(poi_lats)
    return GraphSet(
        collaborative=build_collaborative(train, user_types, n_pois, merged),
        temporal_user=build_temporal(train, labels, "user", n_users, merged),
        temporal_poi=build_temporal(train, labels, "poi", n_pois, merged),
        geographical=build_geographical(poi_lats, poi_lons, poi_region, geo_threshold_km, merged),
        transitional=build_transitional(train, n_pois),
        merged=merged,
    )
