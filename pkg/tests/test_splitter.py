import numpy as np
import pytest
import torch

from scenario_poi.optim import Adam
from scenario_poi.splitter import (
    GradientBuffer,
    ParamRegistry,
    SplitRecord,
    cluster_scenarios,
    detect_and_split,
    pairwise_similarity,
)

from oracles import cosine


def registry_with(*shapes):
    reg = ParamRegistry(4)
    for i, shape in enumerate(shapes):
        reg.add(f"p{i}", torch.zeros(shape, dtype=torch.float64))
    return reg


def fill(buffer, reg, name, grads):
    for s, g in grads.items():
        for row in np.atleast_2d(g):
            buffer.record(reg, name, s, torch.as_tensor(row, dtype=torch.float64))


def test_registry_routing_and_split():
    reg = registry_with((3,), (2, 2))
    assert reg.param_count() == reg.initial_count == 7
    shared = reg.route("p0", 2)
    twin = reg.split("p0", {1, 3})
    assert reg.route("p0", 0) is shared and reg.route("p0", 2) is shared
    assert reg.route("p0", 1) is twin and reg.route("p0", 3) is twin
    assert reg.copy_index("p0", 3) == 1 and reg.copy_index("p1", 3) == 0
    assert reg.param_count() == 10
    with pytest.raises(RuntimeError):
        reg.split("p0", {0})
    with pytest.raises(KeyError):
        reg.route("nope", 0)
    with pytest.raises(KeyError):
        reg.add("p1", torch.zeros(1))


def test_buffer_mean_and_shape_check():
    reg = registry_with((2,))
    buf = GradientBuffer(4)
    fill(buf, reg, "p0", {0: [[1.0, 2.0], [3.0, 4.0]]})
    assert buf.mean("p0", 0).tolist() == [2.0, 3.0]
    assert buf.mean("p0", 1) is None
    with pytest.raises(ValueError):
        buf.record(reg, "p0", 0, torch.zeros(3))
    reg.split("p0", {1})
    fill(buf, reg, "p0", {1: [[5.0, 5.0]]})
    assert buf.mean("p0", 1) is None  # split tensors are no longer tracked


def test_pairwise_similarity_matches_oracle_and_excludes_zero(rng):
    reg = registry_with((5,))
    buf = GradientBuffer(4)
    grads = {0: rng.normal(size=(3, 5)), 1: rng.normal(size=(2, 5)), 2: np.zeros((1, 5))}
    fill(buf, reg, "p0", grads)
    sim, active = pairwise_similarity(buf, "p0")
    assert active == [0, 1]
    assert sim[0, 1] == pytest.approx(cosine(grads[0].mean(0), grads[1].mean(0)), abs=1e-12)
    assert np.isnan(sim[2, 0]) and np.isnan(sim[3, 3])


def test_cluster_tie_breaks():
    sim = np.array([
        [1.0, -0.8, -0.8, 0.0],
        [-0.8, 1.0, 0.3, 0.0],
        [-0.8, 0.3, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    # (0,1) and (0,2) tie at -0.8: the lexicographically first pair seeds
    a, b, s = cluster_scenarios(sim, [0, 1, 2, 3], 4)
    assert s == -0.8
    assert a == (0, 3) and b == (1, 2)  # scenario 3 is equidistant: joins seed a
    a, b, _ = cluster_scenarios(sim, [0, 1, 2], 4)
    assert 3 in a  # inactive scenarios stay with seed a
    with pytest.raises(ValueError):
        cluster_scenarios(sim, [1], 4)


def test_threshold_is_strict():
    reg = registry_with((2,))
    buf = GradientBuffer(4)
    # cos(120 deg) = -0.5 exactly: not below the threshold
    fill(buf, reg, "p0", {0: [[1.0, 0.0]], 1: [[-0.5, np.sqrt(3) / 2]]})
    sim, _ = pairwise_similarity(buf, "p0")
    assert sim[0, 1] == pytest.approx(-0.5)
    assert detect_and_split(reg, buf, threshold=min(-0.5, sim[0, 1])) == []
    assert not reg.is_split("p0")


def test_detect_and_split_clones_optimizer_state():
    reg = registry_with((2,))
    opt = Adam(lr=0.1)
    p = reg.route("p0", 0)
    p.grad = torch.tensor([1.0, -1.0], dtype=torch.float64)
    opt.step([p])
    buf = GradientBuffer(4)
    fill(buf, reg, "p0", {0: [[1.0, 0.0]], 1: [[0.9, 0.1]], 2: [[-1.0, 0.0]]})
    records = detect_and_split(reg, buf, -0.5, epoch=7, step=70, optimizer=opt)
    assert len(records) == 1
    r = records[0]
    assert (r.param, r.epoch, r.step) == ("p0", 7, 70)
    assert r.group_a == (0, 1, 3) and r.group_b == (2,)
    twin = reg.route("p0", 2)
    assert twin is not p and torch.equal(twin, p)
    st, st2 = opt.get(p), opt.get(twin)
    assert st2.step == st.step and torch.equal(st2.m, st.m) and st2.m is not st.m
    assert buf.counts == {}
    # at most once: a fresh conflict on the same parameter does nothing
    fill(buf, reg, "p0", {0: [[1.0, 0.0]], 1: [[-1.0, 0.0]]})
    assert detect_and_split(reg, buf, -0.5) == []
    assert len(reg.params["p0"]) == 2


def test_split_record_line_round_trip():
    r = SplitRecord("gate.geo", 21, 300, -0.71, (0, 1, 4), (2, 3, 5, 6, 7))
    line = r.to_line()
    assert line == "21\tgate.geo\t-0.71\t0,1,4\t2,3,5,6,7"
    back = SplitRecord.from_line(line + "\n", step=300)
    assert back == r
