import threading
import time

import numpy as np
import pytest

from blocktopo import (EngineConfig, RelationKind as K, build_block_graph, build_block_index,
                       compute_relation, generate_grid_mesh, partition_by_index, partition_grid,
                       run_workload)
from blocktopo.engine import ConsumerGroup, Cursor, EngineStopped, bfs_order
from blocktopo.workloads import CriticalPoints, RelationSweep, ScalarField


def claims(cursor, n, resident=()):
    res = set(resident)
    blocks = {b for b, _ in res}
    out = []
    for _ in range(n):
        c = cursor.claim(lambda b, k: (b, k) in res, lambda b: b in blocks, len(blocks))
        if c is None:
            break
        out.append(c)
        cursor.release(*c)
        res.add(c)
        blocks.add(c[0])
    return out


def test_linear_successors():
    cur = Cursor(12, [K.VE], "linear", "single")
    cur.redirect(5, K.VE)
    got = claims(cur, 4, resident={(5, K.VE)})
    assert [b for b, _ in got] == [6, 7, 8, 9]
    assert all(k is K.VE for _, k in got)


def test_linear_wraps_and_skips_resident():
    cur = Cursor(4, [K.VE], "linear", "single")
    cur.redirect(2, K.VE)
    got = claims(cur, 10, resident={(2, K.VE), (0, K.VE)})
    assert [b for b, _ in got] == [3, 1]


@pytest.fixture(scope="module")
def grid9():
    m = partition_grid(generate_grid_mesh(9, 9, 3), (3, 3, 1))
    return m, build_block_graph(m)


def test_spatial_neighbours_first(grid9):
    _, g = grid9
    cur = Cursor(9, [K.VT], "spatial", "single", graph=g)
    cur.redirect(4, K.VT)
    got = claims(cur, 8, resident={(4, K.VT)})
    assert sorted(b for b, _ in got) == [0, 1, 2, 3, 5, 6, 7, 8]
    assert [b for b, _ in got] == [0, 1, 2, 3, 5, 6, 7, 8]  # ascending within the ring


def test_bfs_order_moves_outward(grid9):
    _, g = grid9
    order = bfs_order(g, 0)
    assert order[0] == 0 and set(order[1:4]) == {1, 3, 4}
    assert sorted(order) == list(range(9))


def test_scope_all_cycles_kinds_then_block():
    kinds = [K.VV, K.VT, K.FT]
    cur = Cursor(10, kinds, "linear", "all")
    cur.redirect(3, K.VV)
    got = claims(cur, 6)
    assert got == [(3, K.VV), (3, K.VT), (3, K.FT), (4, K.VV), (4, K.VT), (4, K.FT)]


def test_single_scope_follows_last_request():
    cur = Cursor(10, [K.VE, K.EF], "linear", "single")
    cur.redirect(2, K.EF)
    got = claims(cur, 2, resident={(2, K.EF)})
    assert got == [(3, K.EF), (4, K.EF)]


def test_redirect_jump():
    cur = Cursor(12, [K.VE], "linear", "single")
    cur.redirect(2, K.VE)
    claims(cur, 2, resident={(2, K.VE)})
    cur.redirect(9, K.VE)
    got = claims(cur, 3, resident={(9, K.VE)})
    assert [b for b, _ in got] == [10, 11, 0]


def test_prefetch_only_into_free_slots():
    cur = Cursor(10, [K.VE], "linear", "single", capacity=3)
    cur.redirect(0, K.VE)
    got = claims(cur, 10, resident={(0, K.VE)})
    assert [b for b, _ in got] == [1, 2]
    # in-flight blocks count against the room too
    cur = Cursor(10, [K.VE], "linear", "single", capacity=3)
    cur.redirect(0, K.VE)
    a = cur.claim(lambda b, k: b == 0, lambda b: b == 0, 1)
    b = cur.claim(lambda b, k: b == 0, lambda b: b == 0, 1)
    assert (a, b) == ((1, K.VE), (2, K.VE))
    assert cur.claim(lambda b, k: b == 0, lambda b: b == 0, 1) is None


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(required_kinds=())
    with pytest.raises(ValueError):
        EngineConfig.from_mode("diagonal-all", required_kinds=[K.VE])
    cfg = EngineConfig.from_mode("spatial-all", 6, required_kinds=[K.VE], consumers=2)
    assert (cfg.direction, cfg.scope, cfg.workers_per_consumer) == ("spatial", "all", 5)
    assert cfg.total_threads == 2 + 2 * 6


@pytest.fixture(scope="module")
def grid():
    m = generate_grid_mesh(8, 8, 8)
    m = m.with_blocks(partition_by_index(m, 8))
    return m, build_block_index(m)


def _group(grid, workers=0, scope="single", capacity=8, kinds=(K.VE, K.VT), **kw):
    m, idx = grid
    cfg = EngineConfig(direction="linear", scope=scope, required_kinds=kinds,
                       workers_per_consumer=workers, buffer_capacity=capacity)
    return ConsumerGroup(m, idx, cfg, **kw)


def test_cold_miss_then_warm_hit(grid):
    m, idx = grid
    v = int(idx.sources(2, 0)[0])
    with _group(grid) as g:
        table = g.request(K.VE, v)
        assert table == compute_relation(m, idx, 2, K.VE)
        assert g.cursor.b_i == 2
        assert g.stats.leader_computations == 1 and g.stats.misses == 1
        assert g.request(K.VE, v) is table
        assert g.stats.leader_computations == 1 and g.stats.misses == 1


def test_scope_all_prefetches_declared_kind(grid):
    _, idx = grid
    v = int(idx.sources(2, 0)[0])
    with _group(grid, workers=2, scope="all") as g:
        g.request(K.VE, v)
        deadline = time.time() + 10
        while not g.buffer.contains(2, K.VT) and time.time() < deadline:
            time.sleep(0.01)
        misses, wait = g.stats.misses, g.stats.wait_time
        g.request(K.VT, v)
        assert g.stats.misses == misses
        assert g.stats.wait_time == wait
        assert g.stats.worker_computations > 0


def test_undeclared_kind_rejected(grid):
    with _group(grid) as g:
        with pytest.raises(ValueError, match="not declared"):
            g.request(K.TT, 0)


def test_request_after_shutdown(grid):
    g = _group(grid).start()
    g.shutdown()
    with pytest.raises(EngineStopped):
        g.request(K.VE, 0)


def test_capacity_one_leader_evicts(grid):
    _, idx = grid
    with _group(grid, capacity=1) as g:
        for b in range(4):
            g.request(K.VE, int(idx.sources(b, 0)[0]))
            assert g.buffer.block_count == 1
        assert g.buffer.evicted_blocks == 3


def test_kernel_failure_reaches_consumer(grid):
    m, idx = grid

    def broken(mesh, index, b, kind):
        if b == 3:
            raise RuntimeError("kernel exploded")
        return compute_relation(mesh, index, b, kind)

    with _group(grid, workers=2, kernel=broken) as g:
        with pytest.raises(RuntimeError, match="exploded"):
            g.request(K.VE, int(idx.sources(3, 0)[0]))
        g.request(K.VE, int(idx.sources(1, 0)[0]))


class Watch:
    """Kernel wrapper asserting no (block, kind) is computed twice at once."""

    def __init__(self):
        self.lock = threading.Lock()
        self.active = set()
        self.overlaps = 0
        self.calls = 0

    def __call__(self, mesh, index, b, kind):
        with self.lock:
            if (b, kind) in self.active:
                self.overlaps += 1
            self.active.add((b, kind))
            self.calls += 1
        try:
            time.sleep(0.0005)
            return compute_relation(mesh, index, b, kind)
        finally:
            with self.lock:
                self.active.discard((b, kind))


@pytest.mark.parametrize("mode", ["linear-single", "linear-all", "spatial-single", "spatial-all"])
def test_no_duplicated_concurrent_computation(grid, mode):
    m, idx = grid
    watch = Watch()
    cfg = EngineConfig.from_mode(mode, 5, required_kinds=RelationSweep.required_kinds,
                                 buffer_capacity=3)
    out, metrics = run_workload(m, idx, cfg, RelationSweep(), kernel=watch)
    assert watch.calls > 0 and watch.overlaps == 0
    assert metrics.computations["leader"] + metrics.computations["worker"] == watch.calls


def test_multi_consumer_matches_single(grid):
    m, idx = grid
    f = ScalarField(np.random.default_rng(4).random(m.n_vertices))
    outs = []
    for tc in (1, 2, 3):
        cfg = EngineConfig.from_mode("spatial-all", 3, required_kinds=CriticalPoints.required_kinds,
                                     consumers=tc, buffer_capacity=2)
        out, metrics = run_workload(m, idx, cfg, CriticalPoints(f))
        outs.append(out)
        assert len(metrics.wait_time) == tc
        assert all(e >= w for e, w in zip(metrics.execute_time, metrics.wait_time))
    assert outs[0] == outs[1] == outs[2]


def test_warm_rerun_zero_leader_work(grid):
    m, idx = grid
    cfg = EngineConfig.from_mode("linear-single", 1, required_kinds=RelationSweep.required_kinds,
                                 buffer_capacity=idx.n_blocks)
    g = ConsumerGroup(m, idx, cfg)
    with g:
        from blocktopo.workloads import run_consumers
        run_consumers([g], RelationSweep())
        before = g.stats.leader_computations
        run_consumers([g], RelationSweep())
        assert g.stats.leader_computations == before


def test_threads_do_not_outlive_run(grid):
    m, idx = grid
    base = threading.active_count()
    cfg = EngineConfig.from_mode("linear-all", 4, required_kinds=RelationSweep.required_kinds,
                                 consumers=2, buffer_capacity=2)
    run_workload(m, idx, cfg, RelationSweep())
    assert threading.active_count() == base


def test_consumer_failure_shuts_everything_down(grid):
    m, idx = grid
    base = threading.active_count()

    class Boom(RelationSweep):
        def run(self, access, part, n_parts):
            access.row(K.VE, 0)
            raise KeyError("consumer bug")

    cfg = EngineConfig.from_mode("linear-all", 3, required_kinds=RelationSweep.required_kinds,
                                 consumers=2, buffer_capacity=2)
    with pytest.raises(KeyError, match="consumer bug"):
        run_workload(m, idx, cfg, Boom())
    assert threading.active_count() == base


def test_groups_are_isolated(grid):
    m, idx = grid
    cfg = EngineConfig.from_mode("linear-single", 2, required_kinds=[K.VE], consumers=2,
                                 buffer_capacity=2)
    a = ConsumerGroup(m, idx, cfg, name="a")
    b = ConsumerGroup(m, idx, cfg, name="b")
    assert a.buffer is not b.buffer and a.cursor is not b.cursor
    with a, b:
        a.request(K.VE, 0)
        assert not b.buffer.contains(0, K.VE) or b.stats.worker_computations > 0
        assert b.stats.misses == 0
