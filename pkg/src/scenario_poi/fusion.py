"""User lifting, view fusion and candidate scoring."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import torch

from .conv import _row_normalize, _to_torch
from .hypergraph import Hypergraph

USER_VIEWS = ("tem", "collab", "trans", "geo")
POI_VIEWS = ("tem", "collab", "trans", "geo")


def user_poi_matrix(collab: Hypergraph, n_users: int) -> sp.csr_matrix:
    """Binary user x POI matrix: POIs appearing in any of the user's hyperedges."""
    if collab.owners is None:
        raise ValueError("collaborative hypergraph carries no edge owners")
    owner = sp.csr_matrix(
        (np.ones(collab.edge_count), (np.asarray(collab.owners, dtype=np.int64), np.arange(collab.edge_count))),
        shape=(n_users, collab.edge_count),
    )
    m = (owner @ collab.incidence.T).tocsr()
    m.data[:] = 1.0
    return m


def lift_operator(collab: Hypergraph, n_users: int) -> torch.Tensor:
    """Row-normalised H_C^T aggregated per user, as a sparse torch tensor (cached)."""
    cache = collab.__dict__.setdefault("_lift_ops", {})
    op = cache.get(n_users)
    if op is None:
        op = cache[n_users] = _to_torch(_row_normalize(user_poi_matrix(collab, n_users)))
    return op


def lift_user_embeddings(poi_rows: torch.Tensor, lift: torch.Tensor) -> torch.Tensor:
    """User row = mean of the POI rows the user visited; zero when none."""
    return torch.sparse.mm(lift, poi_rows)


def gate_fuse_user(
    views: Mapping[str, torch.Tensor], gates: Mapping[str, torch.Tensor]
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Sum of sigmoid-gated user views; one scalar gate per user and view.

    Returns the fused matrix and the gate values per view.
    """
    fused = None
    lambdas = {}
    for name, rows in views.items():
        lam = torch.sigmoid(rows @ gates[name]).unsqueeze(1)
        lambdas[name] = lam
        fused = lam * rows if fused is None else fused + lam * rows
    return fused, lambdas


def sum_fuse_poi(views: Sequence[torch.Tensor] | Mapping[str, torch.Tensor]) -> torch.Tensor:
    if isinstance(views, Mapping):
        views = list(views.values())
    out = views[0]
    for v in views[1:]:
        out = out + v
    return out


def mean_operator(inputs: Sequence[Sequence[int]], n_pois: int) -> torch.Tensor:
    """Sparse (batch x N) averaging operator over each row's input POIs."""
    rows, cols, vals = [], [], []
    for i, seq in enumerate(inputs):
        if not seq:
            raise ValueError("trajectory has no input check-ins")
        w = 1.0 / len(seq)
        for p in seq:
            if not 0 <= p < n_pois:
                raise IndexError(f"POI {p} not in catalog of {n_pois}")
            rows.append(i)
            cols.append(p)
            vals.append(w)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(inputs), n_pois))
    return _to_torch(m)


def trajectory_repr(
    fused_user: torch.Tensor, fused_poi: torch.Tensor, users: torch.Tensor, inputs_op: torch.Tensor
) -> torch.Tensor:
    return fused_user[users] + torch.sparse.mm(inputs_op, fused_poi)


def score_candidates(repr_rows: torch.Tensor, fused_poi: torch.Tensor) -> torch.Tensor:
    """Dot product of each trajectory representation with every POI row."""
    return repr_rows @ fused_poi.T


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores; ties go to the lower POI index."""
    order = np.argsort(-np.asarray(scores), axis=-1, kind="stable")
    return order[..., :k]
