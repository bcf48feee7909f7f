import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from blocktopo import (RelationKind as K, build_block_index, compute_relation,
                       is_boundary_triangle, make_mesh, static_build)
from blocktopo.relations import ADJACENCY, BOUNDARY, COBOUNDARY
from conftest import single_tet
from oracle import Complex, table_as_tuples

FIXED_ARITY = {K.EV: 2, K.FV: 3, K.TV: 4, K.FE: 3, K.TE: 6, K.TF: 4}


def _row(mesh, idx, kind, dim, verts):
    sid = verts[0] if dim == 0 else int(idx.find(dim, np.array(verts)))
    b = int(idx.block_of(dim)[sid])
    table = compute_relation(mesh, idx, b, kind)
    row = table.rows[int(idx.local_of(dim)[sid])]
    return {idx.vertices(kind.target_dim, t) for t in row}


def test_kind_families():
    assert {k.name for k in BOUNDARY} == {"EV", "FV", "TV", "FE", "TE", "TF"}
    assert {k.name for k in COBOUNDARY} == {"VE", "VF", "VT", "EF", "ET", "FT"}
    assert {k.name for k in ADJACENCY} == {"VV", "EE", "FF", "TT"}
    assert K.parse("ft") is K.FT
    with pytest.raises(ValueError):
        K.parse("XY")


def test_glued_examples(glued):
    m, idx = glued
    assert _row(m, idx, K.VE, 0, (0,)) == {(0, 1), (0, 2), (0, 3), (0, 4)}
    assert _row(m, idx, K.FV, 2, (0, 1, 2)) == {(0,), (1,), (2,)}
    assert _row(m, idx, K.FT, 2, (0, 1, 2)) == {(0, 1, 2, 3), (0, 1, 2, 4)}
    tt = compute_relation(m, idx, 0, K.TT)
    assert tt.rows == [(1,), (0,)]


def test_single_tet_examples(tet):
    m, idx = tet
    te = compute_relation(m, idx, 0, K.TE)
    assert len(te.rows[0]) == 6
    assert compute_relation(m, idx, 0, K.TT).rows == [()]


def test_boundary_triangles(glued, tet):
    m, idx = glued
    shared = int(idx.find(2, np.array([0, 1, 2])))
    assert not is_boundary_triangle(m, idx, shared)
    outer = [f for f in range(idx.count(2)) if f != shared]
    assert len(outer) == 6
    assert all(is_boundary_triangle(m, idx, f) for f in outer)
    topo = static_build(m, idx, [K.FT])
    assert not is_boundary_triangle(m, idx, shared, access=topo)
    m1, idx1 = tet
    assert all(is_boundary_triangle(m1, idx1, f) for f in range(4))


def test_table_shape(glued):
    m, idx = glued
    for b in range(m.n_blocks):
        for kind in K:
            t = compute_relation(m, idx, b, kind)
            assert len(t) == len(idx.sources(b, kind.source_dim))
            n_targets = idx.count(kind.target_dim)
            for row in t.rows:
                assert list(row) == sorted(set(row))
                assert all(0 <= x < n_targets for x in row)
                if kind in FIXED_ARITY:
                    assert len(row) == FIXED_ARITY[kind]


def test_bad_block(glued):
    m, idx = glued
    with pytest.raises(IndexError):
        compute_relation(m, idx, 2, K.VE)


def test_oracle_self_check(glued):
    """The fast oracle agrees with all-pairs enumeration."""
    m, _ = glued
    cx = Complex(m.tets)
    for name in ("EV", "TE", "VF", "ET", "VV", "EE", "FF", "TT"):
        sd = "VEFT".index(name[0])
        for s in cx.simplices[sd]:
            assert cx.relation(name, s) == cx.relation_all_pairs(name, s)


def _all_rows(mesh):
    idx = build_block_index(mesh)
    topo = static_build(mesh, idx, full=True)
    rows = {}
    for kind in K:
        n = idx.count(kind.source_dim)
        rows[kind] = [set(topo.row(kind, s)) for s in range(n)]
    return idx, rows


DUAL = [(K.EV, K.VE), (K.FV, K.VF), (K.TV, K.VT), (K.FE, K.EF), (K.TE, K.ET), (K.TF, K.FT)]


def check_invariants(mesh):
    idx, R = _all_rows(mesh)
    for down, up in DUAL:
        for s, row in enumerate(R[down]):
            for t in row:
                assert s in R[up][t], (down.name, s, t)
        for t, row in enumerate(R[up]):
            for s in row:
                assert t in R[down][s], (up.name, t, s)
    for kind in ADJACENCY:
        for a, row in enumerate(R[kind]):
            assert a not in row
            for b in row:
                assert a in R[kind][b]
    for t in range(idx.count(3)):
        faces = R[K.TF][t]
        assert R[K.TV][t] == set().union(*(R[K.FV][f] for f in faces))
        assert R[K.TE][t] == set().union(*(R[K.FE][f] for f in faces))
    for f in range(idx.count(2)):
        assert R[K.FV][f] == set().union(*(R[K.EV][e] for e in R[K.FE][f]))


@st.composite
def soups(draw):
    nv = draw(st.integers(4, 12))
    quads = st.lists(st.integers(0, nv - 1), min_size=4, max_size=4, unique=True)
    tets = draw(st.lists(quads, min_size=1, max_size=14))
    tets = sorted({tuple(sorted(t)) for t in tets})
    used = sorted({v for t in tets for v in t})
    remap = {v: i for i, v in enumerate(used)}
    tets = [[remap[v] for v in t] for t in tets]
    n = len(used)
    k = draw(st.integers(1, min(4, n)))
    cuts = sorted(draw(st.lists(st.integers(1, n - 1), min_size=k - 1, max_size=k - 1,
                                unique=True))) if k > 1 else []
    labels = np.searchsorted(cuts, np.arange(n), side="right")
    return make_mesh(np.zeros((n, 3)), tets, labels)


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(soups())
def test_duality_symmetry_composition(mesh):
    check_invariants(mesh)


def test_invariants_on_fixed_meshes(glued):
    check_invariants(glued[0])
    check_invariants(single_tet())


@pytest.mark.parametrize("seed", range(4))
def test_against_oracle_small(seed):
    from oracle import random_mesh
    m = random_mesh(np.random.default_rng(100 + seed), max_tets=400)
    idx = build_block_index(m)
    cx = Complex(m.tets)
    for b in range(m.n_blocks):
        for kind in K:
            got = table_as_tuples(idx, compute_relation(m, idx, b, kind))
            sd = kind.source_dim
            want_src = [s for s in cx.simplices[sd] if m.block_of[s[0]] == b]
            assert sorted(got) == want_src
            for s in want_src:
                assert got[s] == cx.relation(kind.name, s)
