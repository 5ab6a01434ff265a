"""Node -> hyperedge -> node mean-pooling convolution with residual stacking."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import torch

from .hypergraph import DirectedHypergraph, Hypergraph

DTYPE = torch.float64


def _to_torch(m: sp.spmatrix) -> torch.Tensor:
    m = m.tocoo()
    idx = torch.from_numpy(np.vstack([m.row, m.col]).astype(np.int64))
    return torch.sparse_coo_tensor(idx, torch.from_numpy(m.data).to(DTYPE), m.shape, check_invariants=False).coalesce()


def _row_normalize(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=float)
    sums = np.asarray(m.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sp.diags(inv) @ m


class _Operators:
    __slots__ = ("agg", "prop", "isolated")

    def __init__(self, gather: sp.spmatrix, scatter: sp.spmatrix):
        # gather: node x edge membership used for aggregation (sources when directed)
        # scatter: node x edge membership used for propagation (targets when directed)
        self.agg = _to_torch(_row_normalize(gather.T))
        self.prop = _to_torch(_row_normalize(scatter))
        deg = np.asarray(scatter.sum(axis=1)).ravel()
        self.isolated = torch.from_numpy((deg == 0).astype(np.float64)).to(DTYPE).unsqueeze(1)


def operators(graph: Hypergraph | DirectedHypergraph) -> _Operators:
    ops = graph.__dict__.get("_conv_ops")
    if ops is None:
        if isinstance(graph, DirectedHypergraph):
            ops = _Operators(graph.source_incidence, graph.target_incidence)
        else:
            ops = _Operators(graph.incidence, graph.incidence)
        graph.__dict__["_conv_ops"] = ops
    return ops


def aggregate(graph: Hypergraph | DirectedHypergraph, nodes: torch.Tensor) -> torch.Tensor:
    """Hyperedge messages: mean of member (or source) node rows."""
    if nodes.shape[0] != graph.node_count:
        raise ValueError(f"expected {graph.node_count} rows, got {nodes.shape[0]}")
    return torch.sparse.mm(operators(graph).agg, nodes)


def propagate(
    graph: Hypergraph | DirectedHypergraph, messages: torch.Tensor, previous: torch.Tensor
) -> torch.Tensor:
    """Mean of incident (or targeting) hyperedge messages per node.

    Nodes without any incident hyperedge keep ``previous``.
    """
    if messages.shape[0] != graph.edge_count:
        raise ValueError(f"expected {graph.edge_count} message rows, got {messages.shape[0]}")
    ops = operators(graph)
    return torch.sparse.mm(ops.prop, messages) + ops.isolated * previous


def residual_stack(
    graph: Hypergraph | DirectedHypergraph, init: torch.Tensor, layers: int = 3
) -> torch.Tensor:
    """v_final = 1/(L+1) * sum_{l=0..L} (v^(l) + v^(l-1)), with v^(-1) = 0."""
    if layers < 1:
        raise ValueError("need at least one layer")
    prev, cur = torch.zeros_like(init), init
    total = cur + prev
    for _ in range(layers):
        prev, cur = cur, propagate(graph, aggregate(graph, cur), cur)
        total = total + cur + prev
    return total / (layers + 1)


def directed_conv(graph: DirectedHypergraph, init: torch.Tensor, layers: int = 3) -> torch.Tensor:
    """Source-only aggregation, target-only propagation; same residual scheme."""
    if not isinstance(graph, DirectedHypergraph):
        raise TypeError("directed_conv needs a DirectedHypergraph")
    return residual_stack(graph, init, layers)


def init_embeddings(rows: int, dim: int, generator: torch.Generator) -> torch.Tensor:
    bound = 1.0 / math.sqrt(dim)
    return (torch.rand(rows, dim, generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound
