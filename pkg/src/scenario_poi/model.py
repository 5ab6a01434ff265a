"""The scenario-routed multi-view hypergraph model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from .conv import DTYPE, directed_conv, init_embeddings, residual_stack
from .fusion import (
    POI_VIEWS,
    USER_VIEWS,
    gate_fuse_user,
    lift_operator,
    lift_user_embeddings,
    mean_operator,
    score_candidates,
    sum_fuse_poi,
    trajectory_repr,
)
from .hypergraph import GraphSet
from .ingest import Trajectory
from .objective import LossBreakdown, contrastive_sum, final_loss, rec_loss
from .scenarios import N_SCENARIOS, ScenarioLabel
from .splitter import ParamRegistry


@dataclass
class Batch:
    users: torch.Tensor
    targets: torch.Tensor
    inputs_op: torch.Tensor
    batch_users: torch.Tensor
    batch_pois: torch.Tensor

    def __len__(self) -> int:
        return int(self.users.shape[0])


def make_batch(trajectories: Sequence[Trajectory], n_pois: int) -> Batch:
    inputs = [[c.poi_id for c in t.inputs] for t in trajectories]
    targets = [t.target.poi_id for t in trajectories]
    users = [t.user_id for t in trajectories]
    pois = sorted({p for seq in inputs for p in seq} | set(targets))
    return Batch(
        users=torch.tensor(users, dtype=torch.long),
        targets=torch.tensor(targets, dtype=torch.long),
        inputs_op=mean_operator(inputs, n_pois),
        batch_users=torch.tensor(sorted(set(users)), dtype=torch.long),
        batch_pois=torch.tensor(pois, dtype=torch.long),
    )


@dataclass
class ViewEmbeddings:
    user_views: dict[str, torch.Tensor]
    poi_views: dict[str, torch.Tensor]
    fused_user: torch.Tensor
    fused_poi: torch.Tensor
    gates: dict[str, torch.Tensor]


def _matches(name: str, patterns: Iterable[str]) -> bool:
    return any(name == p or name.startswith(p + ".") for p in patterns)


class ScenarioModel:
    """Embedding tables per sub-hypergraph, four user-view gates, one routing registry."""

    def __init__(
        self,
        graphs: GraphSet,
        n_users: int,
        n_pois: int,
        dim: int = 128,
        layers: int = 3,
        seed: int = 0,
        frozen: Iterable[str] = (),
    ):
        self.graphs = graphs
        self.n_users = n_users
        self.n_pois = n_pois
        self.dim = dim
        self.layers = layers
        self.registry = ParamRegistry(N_SCENARIOS)
        frozen = tuple(frozen)
        gen = torch.Generator().manual_seed(seed)

        def add(name, rows):
            self.registry.add(name, init_embeddings(rows, dim, gen), trainable=not _matches(name, frozen))

        for g in graphs.collaborative:
            add(self._table(g.name), n_pois)
        for g in graphs.temporal_user:
            add(self._table(g.name), n_users)
        for g in graphs.temporal_poi:
            add(self._table(g.name), n_pois)
        for g in graphs.geographical:
            add(self._table(g.name), n_pois)
        add("transitional", n_pois)
        for view in USER_VIEWS:
            name = f"gate.{view}"
            self.registry.add(name, init_embeddings(1, dim, gen).squeeze(0), trainable=not _matches(name, frozen))

    @staticmethod
    def _table(graph_name: str) -> str:
        view, _, part = graph_name.partition(".")
        view = {"collaborative": "collab", "geographical": "geo"}.get(view, view)
        return f"{view}.{part}"

    def table_names(self, scenario: int) -> dict[str, str]:
        ci, ti, gi = self.graphs.slices(ScenarioLabel.decode(scenario))
        g = self.graphs
        return {
            "collab": self._table(g.collaborative[ci].name),
            "temporal_user": self._table(g.temporal_user[ti].name),
            "temporal_poi": self._table(g.temporal_poi[ti].name),
            "geo": self._table(g.geographical[gi].name),
            "trans": "transitional",
        }

    def used_params(self, scenario: int) -> list[str]:
        return [*self.table_names(scenario).values(), *(f"gate.{v}" for v in USER_VIEWS)]

    def views(self, scenario: int) -> ViewEmbeddings:
        reg, g, L = self.registry, self.graphs, self.layers
        ci, ti, gi = g.slices(ScenarioLabel.decode(scenario))
        names = self.table_names(scenario)
        collab_g, geo_g = g.collaborative[ci], g.geographical[gi]

        poi_collab = residual_stack(collab_g, reg.route(names["collab"], scenario), L)
        poi_trans = directed_conv(g.transitional, reg.route("transitional", scenario), L)
        geo_table = reg.route(names["geo"], scenario)
        geo_mask = geo_g.__dict__.get("_member_mask_t")
        if geo_mask is None:
            geo_mask = geo_g.__dict__["_member_mask_t"] = torch.from_numpy(geo_g.member_mask()).unsqueeze(1)
        # POIs outside the region fall back to their layer-0 row
        poi_geo = torch.where(geo_mask, residual_stack(geo_g, geo_table, L), geo_table)
        poi_tem = residual_stack(g.temporal_poi[ti], reg.route(names["temporal_poi"], scenario), L)
        user_tem = residual_stack(g.temporal_user[ti], reg.route(names["temporal_user"], scenario), L)

        lift = lift_operator(collab_g, self.n_users)
        user_views = {
            "tem": user_tem,
            "collab": lift_user_embeddings(poi_collab, lift),
            "trans": lift_user_embeddings(poi_trans, lift),
            "geo": lift_user_embeddings(poi_geo, lift),
        }
        poi_views = {"tem": poi_tem, "collab": poi_collab, "trans": poi_trans, "geo": poi_geo}
        gates = {v: reg.route(f"gate.{v}", scenario) for v in USER_VIEWS}
        fused_user, lambdas = gate_fuse_user(user_views, gates)
        return ViewEmbeddings(user_views, poi_views, fused_user, sum_fuse_poi(poi_views), lambdas)

    def loss(self, batch: Batch, scenario: int, lam: float = 0.1, tau: float = 0.1) -> LossBreakdown:
        v = self.views(scenario)
        reprs = trajectory_repr(v.fused_user, v.fused_poi, batch.users, batch.inputs_op)
        l_rec = rec_loss(score_candidates(reprs, v.fused_poi), batch.targets)
        l_user = contrastive_sum([v.user_views[k][batch.batch_users] for k in USER_VIEWS], tau)
        l_poi = contrastive_sum([v.poi_views[k][batch.batch_pois] for k in POI_VIEWS], tau)
        return final_loss(l_user, l_poi, l_rec, lam, scenario)

    @torch.no_grad()
    def score(self, trajectories: Sequence[Trajectory], scenario: int) -> np.ndarray:
        """Candidate scores (len(trajectories) x N) under one composite scenario."""
        if not trajectories:
            return np.zeros((0, self.n_pois))
        v = self.views(scenario)
        batch = make_batch(trajectories, self.n_pois)
        reprs = trajectory_repr(v.fused_user, v.fused_poi, batch.users, batch.inputs_op)
        return score_candidates(reprs, v.fused_poi).numpy()

    def score_all(self, trajectories: Sequence[Trajectory], scenarios: Sequence[int]) -> np.ndarray:
        out = np.zeros((len(trajectories), self.n_pois), dtype=np.float64)
        scenarios = np.asarray(scenarios)
        for s in range(N_SCENARIOS):
            idx = np.flatnonzero(scenarios == s)
            if len(idx):
                out[idx] = self.score([trajectories[i] for i in idx], s)
        return out


__all__ = ["Batch", "ScenarioModel", "ViewEmbeddings", "make_batch", "DTYPE"]
