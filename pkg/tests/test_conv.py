import numpy as np
import pytest
import torch

from scenario_poi.conv import aggregate, directed_conv, init_embeddings, propagate, residual_stack
from scenario_poi.hypergraph import DirectedHypergraph, Hypergraph

from oracles import conv_oracle


def random_graph(rng, n=12, m=6):
    edges = [tuple(rng.choice(n, size=rng.integers(1, 5), replace=False).tolist()) for _ in range(m)]
    return Hypergraph(n, edges)


def random_directed(rng, n=12, m=6):
    edges = []
    for _ in range(m):
        s = rng.choice(n, size=rng.integers(1, 3), replace=False).tolist()
        t = rng.choice(n, size=rng.integers(1, 3), replace=False).tolist()
        edges.append((tuple(s), tuple(t)))
    return DirectedHypergraph(n, edges)


def test_worked_example_by_hand():
    # nodes 0,1 share an edge, node 2 shares one with node 1, node 3 is isolated
    g = Hypergraph(4, [(0, 1), (1, 2)])
    x = torch.tensor([[1.0], [3.0], [5.0], [7.0]], dtype=torch.float64)
    msgs = aggregate(g, x)
    assert msgs.squeeze(1).tolist() == [2.0, 4.0]
    out = propagate(g, msgs, x)
    assert out.squeeze(1).tolist() == [2.0, 3.0, 4.0, 7.0]
    one = residual_stack(g, x, layers=1)
    # ((x + 0) + (v1 + x)) / 2
    assert one.squeeze(1).tolist() == pytest.approx([2.0, 4.5, 7.0, 10.5])


def test_matches_loop_oracle(rng):
    for layers in (1, 2, 3):
        g = random_graph(rng)
        x = rng.normal(size=(12, 5))
        got = residual_stack(g, torch.from_numpy(x), layers).numpy()
        want = conv_oracle(12, g.hyperedges, x, layers)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_directed_matches_loop_oracle(rng):
    g = random_directed(rng)
    x = rng.normal(size=(12, 4))
    got = directed_conv(g, torch.from_numpy(x), 2).numpy()
    np.testing.assert_allclose(got, conv_oracle(12, g.hyperedges, x, 2, directed=True), atol=1e-12)


def test_directed_only_targets_receive():
    g = DirectedHypergraph(3, [((0,), (1,))])
    x = torch.tensor([[1.0], [10.0], [100.0]], dtype=torch.float64)
    out = propagate(g, aggregate(g, x), x)
    assert out.squeeze(1).tolist() == [1.0, 1.0, 100.0]
    with pytest.raises(TypeError):
        directed_conv(Hypergraph(3, [(0, 1)]), x)


def test_edgeless_graph_is_identity():
    g = Hypergraph(5, [])
    x = torch.randn(5, 3, dtype=torch.float64)
    # every layer carries x forward: (x + sum_l 2x) / (L+1) = (2L+1)/(L+1) x
    torch.testing.assert_close(residual_stack(g, x, 3), x * 7 / 4)


def test_shape_errors():
    g = Hypergraph(3, [(0, 1)])
    with pytest.raises(ValueError):
        aggregate(g, torch.zeros(4, 2, dtype=torch.float64))
    with pytest.raises(ValueError):
        propagate(g, torch.zeros(2, 2, dtype=torch.float64), torch.zeros(3, 2, dtype=torch.float64))
    with pytest.raises(ValueError):
        residual_stack(g, torch.zeros(3, 2, dtype=torch.float64), 0)


def test_gradient_against_finite_differences(rng):
    g = random_graph(rng, n=8, m=5)
    dg = random_directed(rng, n=8, m=5)
    x = torch.from_numpy(rng.normal(size=(8, 3))).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda t: residual_stack(g, t, 2), (x,), eps=1e-6, atol=1e-8)
    assert torch.autograd.gradcheck(lambda t: directed_conv(dg, t, 3), (x,), eps=1e-6, atol=1e-8)


def test_permutation_equivariance(rng):
    g = random_graph(rng)
    perm = rng.permutation(12)
    inv = np.argsort(perm)
    # node v of the relabelled graph is node perm[v] of the original
    pg = Hypergraph(12, [tuple(int(inv[v]) for v in e) for e in g.hyperedges])
    x = rng.normal(size=(12, 4))
    out = residual_stack(g, torch.from_numpy(x), 3).numpy()
    pout = residual_stack(pg, torch.from_numpy(x[perm]), 3).numpy()
    np.testing.assert_allclose(pout, out[perm], atol=1e-12)


def test_init_embeddings_bounds_and_seed():
    a = init_embeddings(50, 16, torch.Generator().manual_seed(7))
    b = init_embeddings(50, 16, torch.Generator().manual_seed(7))
    assert a.dtype == torch.float64
    assert torch.equal(a, b)
    assert float(a.abs().max()) <= 0.25
    assert float(a.abs().max()) > 0.2
