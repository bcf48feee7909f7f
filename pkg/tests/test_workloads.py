import numpy as np
import pytest

from blocktopo import (EngineConfig, build_block_index, generate_grid_mesh, partition_by_index,
                       run_workload, static_build)
from blocktopo.baselines import OnDemandTopology
from blocktopo.workloads import (CriticalPoints, DiscreteGradient, GradientCycleError,
                                 GradientField, RelationSweep, ScalarField, VPathTraversal,
                                 critical_points, discrete_gradient, make_workload,
                                 split_range, sweep_all_relations, vpath_traversal)
from oracle import check_gradient, classify_points, random_mesh


def _static(mesh_idx):
    m, idx = mesh_idx
    return static_build(m, idx, full=True)


def test_split_range_covers_everything():
    for n in (0, 1, 7, 100):
        for parts in (1, 2, 3, 8):
            got = [list(split_range(n, p, parts)) for p in range(parts)]
            assert sum(got, []) == list(range(n))


def test_field_tie_break_by_id():
    f = ScalarField([1.0, 1.0, 0.5, 1.0])
    assert f.rank.tolist() == [1, 2, 0, 3]
    assert ScalarField(np.zeros(4)).rank.tolist() == [0, 1, 2, 3]


def test_field_specs(glued):
    m, _ = glued
    assert ScalarField.from_spec("index", m).rank.tolist() == [0, 1, 2, 3, 4]
    assert ScalarField.from_spec("x", m).values.tolist() == [0, 1, 0, 0, 0]
    a = ScalarField.from_spec("random:3", m).values
    assert np.array_equal(a, ScalarField.from_spec("random:3", m).values)
    with pytest.raises(ValueError):
        ScalarField.from_spec("file", m)
    with pytest.raises(ValueError):
        ScalarField.from_spec("y", m)


def test_single_tet_critical_points(tet):
    rep = critical_points(_static(tet), ScalarField([0, 1, 2, 3]))
    assert [rep.of(v) for v in range(4)] == ["minimum", "regular", "regular", "maximum"]
    assert all(rep.boundary)
    c = rep.counts()
    assert (c["minimum"], c["maximum"], c["saddle"]) == (1, 1, 0)


def test_constant_field_matches_index_order(tet):
    topo = _static(tet)
    assert critical_points(topo, ScalarField(np.zeros(4))) == critical_points(
        topo, ScalarField([0, 1, 2, 3]))


def test_two_tets_index_field(glued):
    # both apexes have an all-lower link, so v3 is a maximum as well as v4
    rep = critical_points(_static(glued), ScalarField(np.arange(5)))
    assert rep.counts()["minimum"] == 1 and rep.of(0) == "minimum"
    assert rep.of(4) == "maximum" and rep.of(3) == "maximum"
    assert rep.counts()["maximum"] == 2
    assert sum(rep.counts()[k] for k in ("minimum", "regular", "saddle", "maximum")) == 5


def test_single_tet_gradient(tet):
    m, idx = tet
    grad = discrete_gradient(_static(tet), ScalarField([0, 1, 2, 3]))

    def sid(*vs):
        d = len(vs) - 1
        return vs[0] if d == 0 else (0 if d == 3 else int(idx.find(d, np.array(vs))))

    want = {
        (0, sid(1), sid(0, 1)), (0, sid(2), sid(0, 2)), (1, sid(1, 2), sid(0, 1, 2)),
        (0, sid(3), sid(0, 3)), (1, sid(1, 3), sid(0, 1, 3)), (1, sid(2, 3), sid(0, 2, 3)),
        (2, sid(1, 2, 3), 0),
    }
    assert set(grad.pairs()) == want
    assert grad.critical_counts() == (1, 0, 0, 0)
    assert grad.critical(0).tolist() == [0]
    assert vpath_traversal(_static(tet), grad).steps == 0


def test_gradient_rejects_double_pairing():
    g = GradientField((2, 1, 0, 0))
    g.pair(0, 0, 0)
    with pytest.raises(ValueError, match="paired twice"):
        g.pair(0, 1, 0)


@pytest.mark.parametrize("seed", range(6))
def test_gradient_valid_on_random_meshes(seed):
    rng = np.random.default_rng(40 + seed)
    m = random_mesh(rng, max_tets=1500)
    idx = build_block_index(m)
    topo = static_build(m, idx, full=True)
    for _ in range(3):
        f = ScalarField(rng.random(m.n_vertices))
        grad = discrete_gradient(topo, f)
        assert check_gradient(idx, grad, f.rank_list) == []
        rep = critical_points(topo, f)
        assert rep.counts()["minimum"] == grad.critical_counts()[0]
        vpath_traversal(topo, grad)  # raises on a cycle


@pytest.mark.parametrize("seed", range(6))
def test_critical_points_match_link_oracle(seed):
    rng = np.random.default_rng(70 + seed)
    m = random_mesh(rng, max_tets=1500)
    idx = build_block_index(m)
    values = rng.random(m.n_vertices)
    rep = critical_points(static_build(m, idx, full=True), ScalarField(values))
    kinds, boundary = classify_points(m.tets, values)
    assert [rep.of(v) for v in range(m.n_vertices)] == kinds
    assert list(rep.boundary) == boundary


def test_monotone_invariance():
    rng = np.random.default_rng(5)
    m = random_mesh(rng, max_tets=1000)
    topo = static_build(m, build_block_index(m), full=True)
    v = rng.normal(size=m.n_vertices)
    base = critical_points(topo, ScalarField(v))
    for g in (np.exp, lambda x: 3 * x - 7, lambda x: x ** 3, np.arctan):
        assert critical_points(topo, ScalarField(g(v))) == base


@pytest.fixture(scope="module")
def grid6():
    m = generate_grid_mesh(6, 5, 4)
    m = m.with_blocks(partition_by_index(m, 5))
    return m, build_block_index(m)


def test_vpaths_end_on_the_minimum_column(grid6):
    m, idx = grid6
    topo = static_build(m, idx, full=True)
    grad = discrete_gradient(topo, ScalarField.from_spec("x", m))
    res = vpath_traversal(topo, grad)
    assert all(m.coords[u, 0] == 0 for u in res.ends)
    assert set(grad.critical(0).tolist()) == {0}


def test_vpaths_end_at_critical_vertices(grid6):
    m, idx = grid6
    topo = static_build(m, idx, full=True)
    rng = np.random.default_rng(3)
    f = ScalarField(m.coords[:, 0] + 2.5 * rng.random(m.n_vertices))
    grad = discrete_gradient(topo, f)
    res = vpath_traversal(topo, grad)
    assert res.steps > 0 and len(res.ends) == 2 * grad.critical_counts()[1]
    assert set(res.ends) <= set(grad.critical(0).tolist())


def test_vpath_cycle_detected(glued):
    m, idx = glued
    grad = GradientField(tuple(idx.count(d) for d in range(4)))
    e02 = int(idx.find(1, np.array([0, 2])))
    grad.up[0][0] = grad.up[0][2] = e02  # 0 -> 2 -> 0
    with pytest.raises(GradientCycleError):
        vpath_traversal(_static(glued), grad)


def test_workload_outputs_agree_across_structures(grid6):
    m, idx = grid6
    f = ScalarField.from_spec("random:2", m)
    static = static_build(m, idx, full=True)
    grad = discrete_gradient(static, f)
    for name in ("relations", "critical-points", "discrete-gradient", "vpath"):
        ref = make_workload(name, f, grad)
        want = ref.merge([ref.run(static, 0, 1)])
        od = make_workload(name, f, grad)
        assert od.merge([od.run(OnDemandTopology(m, idx, 2), 0, 1)]) == want
        w = make_workload(name, f, grad)
        cfg = EngineConfig.from_mode("spatial-all", 3, required_kinds=w.required_kinds,
                                     consumers=2, buffer_capacity=2)
        out, _ = run_workload(m, idx, cfg, w)
        assert out == want


def test_sweep_request_count(glued):
    m, idx = glued
    topo = OnDemandTopology(m, idx, capacity=2)
    sweep_all_relations(topo)
    assert topo.requests == 3 * sum(idx.count(d) for d in range(4))


def test_make_workload_needs_gradient():
    with pytest.raises(ValueError):
        make_workload("vpath")
    assert isinstance(make_workload("relations"), RelationSweep)
    assert isinstance(make_workload("critical-points", ScalarField([0])), CriticalPoints)
    assert isinstance(make_workload("discrete-gradient", ScalarField([0])), DiscreteGradient)


def test_vpath_uses_only_ev():
    from blocktopo import RelationKind as K
    assert VPathTraversal.required_kinds == (K.EV,)
