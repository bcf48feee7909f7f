"""Block-local extraction of the sixteen topological relations.

Every kernel returns the relation restricted to the source simplices internal
to one block.  Coboundary and adjacency rows are complete: targets owned by
other blocks are found by scanning the block's external tetrahedra and, for
adjacencies, the tetrahedra of the blocks the source vertices live in.
"""

from __future__ import annotations

import enum

import numpy as np

from .block_index import BlockIndex, _faces, encode

__all__ = [
    "RelationKind",
    "RelationTable",
    "BOUNDARY",
    "COBOUNDARY",
    "ADJACENCY",
    "compute_relation",
    "is_boundary_triangle",
]

_DIM = {"V": 0, "E": 1, "F": 2, "T": 3}


class RelationKind(enum.IntEnum):
    EV = 0
    FV = 1
    TV = 2
    FE = 3
    TE = 4
    TF = 5
    VE = 6
    VF = 7
    VT = 8
    EF = 9
    ET = 10
    FT = 11
    VV = 12
    EE = 13
    FF = 14
    TT = 15

    @property
    def source_dim(self) -> int:
        return _DIM[self.name[0]]

    @property
    def target_dim(self) -> int:
        return _DIM[self.name[1]]

    @property
    def family(self) -> str:
        s, t = self.source_dim, self.target_dim
        return "boundary" if t < s else "coboundary" if t > s else "adjacency"

    @classmethod
    def parse(cls, name: str) -> "RelationKind":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown relation {name!r}") from None


BOUNDARY = tuple(k for k in RelationKind if k.family == "boundary")
COBOUNDARY = tuple(k for k in RelationKind if k.family == "coboundary")
ADJACENCY = tuple(k for k in RelationKind if k.family == "adjacency")


class RelationTable:
    """One relation kind restricted to the internal simplices of one block.

    ``rows[i]`` is the sorted tuple of target ids of source ``sources[i]``.
    ``nbytes`` is the size of the compact encoding: int32 targets plus int64
    row offsets for variable-arity relations.
    """

    __slots__ = ("kind", "block", "sources", "rows", "nbytes")

    def __init__(self, kind, block, sources, rows, nbytes):
        self.kind = kind
        self.block = block
        self.sources = sources
        self.rows = rows
        self.nbytes = nbytes

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, RelationTable):
            return NotImplemented
        return (self.kind == other.kind and self.block == other.block
                and np.array_equal(self.sources, other.sources) and self.rows == other.rows)

    __hash__ = None

    def as_dict(self) -> dict:
        return dict(zip(self.sources.tolist(), self.rows))

    def __repr__(self):
        return f"RelationTable({self.kind.name}, block={self.block}, rows={len(self.rows)})"


def _fixed(kind, b, sources, arr):
    arr = np.sort(arr, axis=1)
    rows = list(map(tuple, arr.tolist()))
    return RelationTable(kind, b, sources, rows, int(arr.size) * 4)


def _csr(kind, b, sources, row, target):
    """Build a variable-arity table from (row, target) pairs (unique)."""
    n = len(sources)
    order = np.lexsort((target, row))
    row, target = row[order], target[order]
    counts = np.bincount(row, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(counts)]).tolist()
    flat = target.tolist()
    rows = [tuple(flat[offsets[i]:offsets[i + 1]]) for i in range(n)]
    return RelationTable(kind, b, sources, rows, len(flat) * 4 + (n + 1) * 8)


def _local_rows(index: BlockIndex, b: int, dim: int, verts: np.ndarray):
    """Row numbers in block ``b`` of simplices given by sorted vertex rows."""
    if dim == 0:
        return index.vertex_local[verts[:, 0]].astype(np.int64)
    if dim == 3:
        raise ValueError
    ids = index.find(dim, verts)
    return ids - index.block_range(b, dim).start


def _candidates(index: BlockIndex, tets_ids: np.ndarray, dim: int):
    """Unique simplices of ``dim`` spanned by the given tetrahedra: (ids, verts)."""
    tv = index.tets[tets_ids]
    if dim == 3:
        return tets_ids.astype(np.int64), tv
    if dim == 0:
        ids = np.unique(tv)
        return ids.astype(np.int64), ids[:, None]
    faces = _faces(tv, dim + 1).reshape(-1, dim + 1)
    keys, first = np.unique(encode(faces, index.n_vertices), return_index=True)
    verts = faces[first]
    return index.find(dim, verts), verts


def _boundary(index, b, kind, sources, src_verts):
    td = kind.target_dim
    if td == 0:
        return _fixed(kind, b, sources, src_verts)
    faces = _faces(src_verts, td + 1)
    return _fixed(kind, b, sources, index.find(td, faces))


def _coboundary_pairs(index, b, sd, td):
    labels = index.block_of_vertex
    cand_ids, cand_verts = _candidates(index, index.tets_touching([b]), td)
    sub = _faces(cand_verts, sd + 1)  # (nc, m, sd+1)
    m = sub.shape[1]
    sub = sub.reshape(-1, sd + 1)
    owner = np.repeat(cand_ids, m)
    keep = labels[sub[:, 0]] == b
    sub, owner = sub[keep], owner[keep]
    return _local_rows(index, b, sd, sub), owner


def _coboundary(index, b, kind, sources, src_verts):
    row, owner = _coboundary_pairs(index, b, kind.source_dim, kind.target_dim)
    return _csr(kind, b, sources, row, owner)


def _vertex_adjacency(index, b, kind, sources, src_verts):
    row, eid = _coboundary_pairs(index, b, 0, 1)
    ends = index.edges[eid]
    v = np.asarray(sources)[row]
    other = np.where(ends[:, 0] == v, ends[:, 1], ends[:, 0]).astype(np.int64)
    return _csr(kind, b, sources, row, other)


def _adjacency(index, b, kind, sources, src_verts):
    k = kind.source_dim
    nv = index.n_vertices
    labels = index.block_of_vertex
    touched = np.unique(src_verts)
    blocks = np.unique(labels[touched]).tolist()
    tets = index.tets_touching(blocks)
    tv = index.tets[tets]
    tets = tets[np.isin(tv, touched).any(axis=1)]
    cand_ids, cand_verts = _candidates(index, tets, k)

    # join sources and candidates on shared (k-1)-faces
    src_fac = _faces(src_verts, k)
    ms = src_fac.shape[1]
    src_keys = encode(src_fac, nv).ravel()
    src_row = np.repeat(np.arange(len(sources), dtype=np.int64), ms)
    src_id = np.repeat(np.asarray(sources, dtype=np.int64), ms)

    cand_fac = _faces(cand_verts, k)
    mc = cand_fac.shape[1]
    cand_keys = encode(cand_fac, nv).ravel()
    cand_owner = np.repeat(cand_ids, mc)
    order = np.argsort(cand_keys, kind="stable")
    cand_keys, cand_owner = cand_keys[order], cand_owner[order]

    lo = np.searchsorted(cand_keys, src_keys, side="left")
    hi = np.searchsorted(cand_keys, src_keys, side="right")
    counts = hi - lo
    total = int(counts.sum())
    starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
    pos = np.arange(total) + starts
    row = np.repeat(src_row, counts)
    target = cand_owner[pos]
    keep = target != np.repeat(src_id, counts)
    row, target = row[keep], target[keep]
    span = int(target.max()) + 1 if len(target) else 1
    key = np.unique(row * span + target)
    return _csr(kind, b, sources, key // span, key % span)


def compute_relation(mesh, index: BlockIndex, b: int, kind: RelationKind) -> RelationTable:
    """Relation ``kind`` for every simplex internal to block ``b``.

    Pure function of the immutable mesh and index; safe to call from any
    thread.  ``mesh`` is accepted for interface symmetry and unused.
    """
    kind = RelationKind(kind)
    if not 0 <= b < index.n_blocks:
        raise IndexError(f"block {b} out of range")
    sd = kind.source_dim
    sources = index.sources(b, sd)
    src_verts = index.source_vertices(b, sd)
    fam = kind.family
    if fam == "boundary":
        return _boundary(index, b, kind, sources, src_verts)
    if fam == "coboundary":
        return _coboundary(index, b, kind, sources, src_verts)
    if kind == RelationKind.VV:
        return _vertex_adjacency(index, b, kind, sources, src_verts)
    return _adjacency(index, b, kind, sources, src_verts)


def is_boundary_triangle(mesh, index: BlockIndex, f: int, access=None) -> bool:
    """A triangle lies on the mesh boundary iff it has exactly one tetrahedron.

    The FT row is read through ``access`` when given, otherwise computed for
    the triangle's block on the spot.
    """
    if access is not None:
        return len(access.row(RelationKind.FT, f)) == 1
    b = int(index.tri_block[f])
    table = compute_relation(mesh, index, b, RelationKind.FT)
    return len(table.rows[int(index.tri_local[f])]) == 1
