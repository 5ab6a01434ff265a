import numpy as np
import pytest
import torch

from scenario_poi.fusion import (
    gate_fuse_user,
    lift_operator,
    lift_user_embeddings,
    mean_operator,
    score_candidates,
    sum_fuse_poi,
    top_k,
    trajectory_repr,
    user_poi_matrix,
)
from scenario_poi.hypergraph import Hypergraph
from scenario_poi.model import ScenarioModel, make_batch
from scenario_poi.scenarios import ScenarioLabel, Spatial

from conftest import make_traj


def test_user_poi_matrix_and_lift():
    g = Hypergraph(5, [(0, 1), (1, 2), (4,)], owners=[0, 0, 2])
    m = user_poi_matrix(g, 3).toarray()
    assert m.tolist() == [[1, 1, 1, 0, 0], [0, 0, 0, 0, 0], [0, 0, 0, 0, 1]]
    rows = torch.arange(10, dtype=torch.float64).reshape(5, 2)
    lifted = lift_user_embeddings(rows, lift_operator(g, 3))
    # user 0 visited POIs 0,1,2 (POI 1 twice: counted once); user 1 nothing
    assert lifted.tolist() == [[2.0, 3.0], [0.0, 0.0], [8.0, 9.0]]
    with pytest.raises(ValueError):
        user_poi_matrix(Hypergraph(5, [(0,)]), 3)


def test_gate_fusion_matches_formula(rng):
    views = {k: torch.from_numpy(rng.normal(size=(6, 4))) for k in ("tem", "collab", "trans", "geo")}
    gates = {k: torch.from_numpy(rng.normal(size=4)) for k in views}
    fused, lambdas = gate_fuse_user(views, gates)
    expected = np.zeros((6, 4))
    for k, v in views.items():
        lam = 1 / (1 + np.exp(-(v.numpy() @ gates[k].numpy())))
        assert np.all((lam > 0) & (lam < 1))
        np.testing.assert_allclose(lambdas[k].squeeze(1).numpy(), lam, atol=1e-15)
        expected += lam[:, None] * v.numpy()
    np.testing.assert_allclose(fused.numpy(), expected, atol=1e-12)


def test_sum_fuse_and_scoring(rng):
    views = [torch.from_numpy(rng.normal(size=(5, 3))) for _ in range(4)]
    fused = sum_fuse_poi(views)
    torch.testing.assert_close(fused, views[0] + views[1] + views[2] + views[3])
    users = torch.from_numpy(rng.normal(size=(2, 3)))
    op = mean_operator([[0, 2], [4]], 5)
    reprs = trajectory_repr(users, fused, torch.tensor([1, 0]), op)
    torch.testing.assert_close(reprs[0], users[1] + (fused[0] + fused[2]) / 2)
    torch.testing.assert_close(reprs[1], users[0] + fused[4])
    scores = score_candidates(reprs, fused)
    assert scores.shape == (2, 5)
    torch.testing.assert_close(scores[1, 3], reprs[1] @ fused[3])


def test_mean_operator_errors():
    with pytest.raises(IndexError):
        mean_operator([[7]], 5)
    with pytest.raises(ValueError):
        mean_operator([[]], 5)


def test_top_k_ties_and_nesting(rng):
    scores = np.array([1.0, 3.0, 3.0, 0.5, 3.0])
    assert top_k(scores, 3).tolist() == [1, 2, 4]
    s = rng.integers(0, 4, size=(20, 30)).astype(float)
    for k in range(1, 30):
        small, big = top_k(s, k), top_k(s, k + 1)
        for a, b in zip(small, big):
            assert set(a) <= set(b)


@pytest.fixture(scope="module")
def tiny_model(small_planted_module):
    data = small_planted_module
    return ScenarioModel(data.build_graphs(), data.catalog.n_users, data.catalog.n_pois, dim=8, layers=2, seed=0), data


@pytest.fixture(scope="module")
def small_planted_module():
    from scenario_poi.pipeline import label_data
    from scenario_poi.synthetic import planted_corpus

    checkins, catalog, _ = planted_corpus(n_users=30, n_pois=40, days_per_user=5, seed=5)
    return label_data(checkins, catalog)


def test_spatial_label_swaps_only_geo_inputs(tiny_model):
    model, _ = tiny_model
    for s in range(8):
        lab = ScenarioLabel.decode(s)
        flipped = ScenarioLabel(lab.user_type, lab.temporal, Spatial(1 - lab.spatial)).composite
        a, b = model.table_names(s), model.table_names(flipped)
        assert {k for k in a if a[k] != b[k]} == {"geo"}
        va, vb = model.views(s), model.views(flipped)
        assert torch.equal(va.poi_views["tem"], vb.poi_views["tem"])
        assert torch.equal(va.poi_views["collab"], vb.poi_views["collab"])
        assert torch.equal(va.poi_views["trans"], vb.poi_views["trans"])
        assert torch.equal(va.user_views["tem"], vb.user_views["tem"])
        assert not torch.equal(va.poi_views["geo"], vb.poi_views["geo"])


def test_geo_rows_outside_region_fall_back_to_table(tiny_model):
    model, data = tiny_model
    v = model.views(0)
    outside = np.flatnonzero(data.poi_region != 0)
    table = model.registry.route("geo.downtown", 0)
    torch.testing.assert_close(v.poi_views["geo"][outside], table[outside])


def test_gates_in_open_interval(tiny_model):
    model, _ = tiny_model
    for lam in model.views(3).gates.values():
        assert bool(((lam > 0) & (lam < 1)).all())


def test_model_scores_match_manual_composition(tiny_model):
    model, data = tiny_model
    trajs = [t for t, s in zip(data.test, data.test_scenarios) if s == data.test_scenarios[0]][:4]
    s = data.test_scenarios[0]
    got = model.score(trajs, s)
    v = model.views(s)
    for i, t in enumerate(trajs):
        inputs = [c.poi_id for c in t.inputs]
        r = v.fused_user[t.user_id] + v.fused_poi[inputs].mean(dim=0)
        np.testing.assert_allclose(got[i], (v.fused_poi @ r).detach().numpy(), atol=1e-10)


def test_scoring_gradient_finite_differences(tiny_model):
    model, data = tiny_model
    batch = make_batch(data.train[:5], model.n_pois)
    s = 0
    v = model.views(s)
    user = v.fused_user.detach().clone().requires_grad_(True)
    poi = v.fused_poi.detach().clone().requires_grad_(True)

    def f(u, p):
        return score_candidates(trajectory_repr(u, p, batch.users, batch.inputs_op), p)

    assert torch.autograd.gradcheck(f, (user, poi), eps=1e-6, atol=1e-7)


def test_make_batch_collects_batch_entities():
    trajs = [make_traj(0, [1, 2, 3]), make_traj(2, [3, 4])]
    b = make_batch(trajs, 6)
    assert b.users.tolist() == [0, 2]
    assert b.targets.tolist() == [3, 4]
    assert b.batch_pois.tolist() == [1, 2, 3, 4]
    assert b.batch_users.tolist() == [0, 2]
    assert len(b) == 2
