"""Static per-block information built once at initialization.

Global edge and triangle lists are grouped block by block (a simplex belongs
to the block of its lowest vertex) and sorted lexicographically inside each
block, so the simplices internal to block ``b`` occupy the id range
``[s_X[b-1], s_X[b])``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .mesh import Mesh, MeshError

__all__ = ["BlockIndex", "build_block_index", "simplices_in_block"]

_KEY_LIMIT = 2 ** 63


def _faces(rows: np.ndarray, k: int) -> np.ndarray:
    """All k-vertex sub-tuples of each (sorted) row: shape ``(n, C(m,k), k)``."""
    idx = list(combinations(range(rows.shape[1]), k))
    return rows[:, idx]


def encode(verts: np.ndarray, nv: int) -> np.ndarray:
    """Integer key of sorted vertex tuples (last axis), monotone in lex order."""
    verts = verts.astype(np.int64, copy=False)
    key = verts[..., 0].copy()
    for i in range(1, verts.shape[-1]):
        key *= nv
        key += verts[..., i]
    return key


class BlockIndex:
    """Edge list, triangle list, external tetrahedra and interval arrays."""

    def __init__(self, mesh: Mesh, tets, edges, triangles, s_edge, s_tri,
                 internal_tets, external_tets):
        nv = mesh.n_vertices
        self.n_vertices = nv
        self.n_blocks = mesh.n_blocks
        self.block_of_vertex = mesh.block_of
        self.tets = tets
        self.edges = edges
        self.triangles = triangles
        self.s_edge = s_edge
        self.s_tri = s_tri
        self.internal_tets = internal_tets
        self.external_tets = external_tets
        self.edge_keys = encode(edges, nv)
        self.tri_keys = encode(triangles, nv)
        self._keys_global = [
            None,
            bool(np.all(np.diff(self.edge_keys) > 0)),
            bool(np.all(np.diff(self.tri_keys) > 0)),
        ]

        labels = mesh.block_of
        order = np.argsort(labels, kind="stable").astype(np.int32)
        vstart = np.concatenate([[0], np.cumsum(np.bincount(labels, minlength=self.n_blocks))])
        self.block_vertices = [order[vstart[b]:vstart[b + 1]] for b in range(self.n_blocks)]
        self.vertex_local = np.empty(nv, dtype=np.int32)
        self.vertex_local[order] = np.arange(nv, dtype=np.int32) - np.repeat(
            vstart[:-1], np.diff(vstart)).astype(np.int32)

        nt = len(tets)
        self.tet_block = labels[tets[:, 0]].astype(np.int32)
        self.tet_local = np.empty(nt, dtype=np.int32)
        for b, ids in enumerate(internal_tets):
            self.tet_local[ids] = np.arange(len(ids), dtype=np.int32)
        self.edge_block = labels[edges[:, 0]].astype(np.int32) if len(edges) else np.empty(0, np.int32)
        self.tri_block = labels[triangles[:, 0]].astype(np.int32)
        self._start = [vstart[:-1], np.concatenate([[0], s_edge[:-1]]),
                       np.concatenate([[0], s_tri[:-1]])]
        self.edge_local = (np.arange(len(edges)) - self._start[1][self.edge_block]).astype(np.int32)
        self.tri_local = (np.arange(len(triangles)) - self._start[2][self.tri_block]).astype(np.int32)
        self._lists = {}

    # -- sizes -------------------------------------------------------------

    def count(self, dim: int) -> int:
        return (self.n_vertices, len(self.edges), len(self.triangles), len(self.tets))[dim]

    @property
    def euler_characteristic(self) -> int:
        return self.count(0) - self.count(1) + self.count(2) - self.count(3)

    @property
    def nbytes(self) -> int:
        """Bytes of the static encoding (mesh connectivity and labels included)."""
        arrays = [self.tets, self.block_of_vertex, self.edges, self.triangles,
                  self.s_edge, self.s_tri, self.edge_keys, self.tri_keys,
                  self.vertex_local, self.tet_block, self.tet_local,
                  self.edge_block, self.tri_block, self.edge_local, self.tri_local]
        arrays += list(self.internal_tets) + list(self.external_tets) + list(self.block_vertices)
        return int(sum(a.nbytes for a in arrays))

    # -- lookup ------------------------------------------------------------

    def block_range(self, b: int, dim: int) -> range:
        if dim == 1:
            return range(int(self._start[1][b]), int(self.s_edge[b]))
        if dim == 2:
            return range(int(self._start[2][b]), int(self.s_tri[b]))
        raise ValueError("contiguous ranges exist for edges and triangles only")

    def sources(self, b: int, dim: int) -> np.ndarray:
        """Global ids of the simplices of dimension ``dim`` internal to ``b``."""
        if dim == 0:
            return self.block_vertices[b]
        if dim == 3:
            return self.internal_tets[b]
        r = self.block_range(b, dim)
        return np.arange(r.start, r.stop, dtype=np.int64)

    def source_vertices(self, b: int, dim: int) -> np.ndarray:
        if dim == 0:
            return self.block_vertices[b][:, None]
        if dim == 1:
            r = self.block_range(b, 1)
            return self.edges[r.start:r.stop]
        if dim == 2:
            r = self.block_range(b, 2)
            return self.triangles[r.start:r.stop]
        return self.tets[self.internal_tets[b]]

    def vertices(self, dim: int, sid: int) -> tuple:
        if dim == 0:
            return (sid,)
        arr = (None, self.edges, self.triangles, self.tets)[dim]
        return tuple(int(v) for v in arr[sid])

    def vertex_array(self, dim: int) -> np.ndarray:
        if dim == 0:
            return np.arange(self.n_vertices, dtype=np.int32)[:, None]
        return (None, self.edges, self.triangles, self.tets)[dim]

    def block_of(self, dim: int) -> np.ndarray:
        return (self.block_of_vertex, self.edge_block, self.tri_block, self.tet_block)[dim]

    def local_of(self, dim: int) -> np.ndarray:
        return (self.vertex_local, self.edge_local, self.tri_local, self.tet_local)[dim]

    def lists(self, dim: int):
        """Per-simplex (block, local row, vertex tuple) as Python lists, cached."""
        got = self._lists.get(dim)
        if got is None:
            verts = [tuple(r) for r in self.vertex_array(dim).tolist()]
            got = (self.block_of(dim).tolist(), self.local_of(dim).tolist(), verts)
            self._lists[dim] = got
        return got

    def find(self, dim: int, verts: np.ndarray) -> np.ndarray:
        """Global ids of edges (dim 1) or triangles (dim 2) from sorted vertex rows.

        Binary search inside the owning block's sorted range.
        """
        verts = np.asarray(verts)
        shape = verts.shape[:-1]
        verts = verts.reshape(-1, dim + 1)
        if dim == 0:
            return verts[:, 0].astype(np.int64).reshape(shape)
        keys_all = self.edge_keys if dim == 1 else self.tri_keys
        keys = encode(verts, self.n_vertices)
        if self._keys_global[dim]:
            ids = np.searchsorted(keys_all, keys)
        else:
            ids = np.empty(len(keys), dtype=np.int64)
            blocks = self.block_of_vertex[verts[:, 0]]
            for b in np.unique(blocks).tolist():
                sel = np.flatnonzero(blocks == b)
                r = self.block_range(b, dim)
                ids[sel] = r.start + np.searchsorted(keys_all[r.start:r.stop], keys[sel])
        ok = ids < len(keys_all)
        if not ok.all() or not np.array_equal(keys_all[ids], keys):
            raise KeyError("simplex not present in the mesh")
        return ids.reshape(shape)

    def tets_touching(self, blocks) -> np.ndarray:
        """Ids of all tetrahedra intersecting any of ``blocks`` (sorted, unique)."""
        parts = []
        for b in blocks:
            parts.append(self.internal_tets[b])
            parts.append(self.external_tets[b])
        if not parts:
            return np.empty(0, dtype=np.int32)
        return np.unique(np.concatenate(parts))


def simplices_in_block(index: BlockIndex, b: int, dim: int):
    """Id range of block ``b`` for edges/triangles, id arrays for vertices/tets."""
    if not 0 <= b < index.n_blocks:
        raise IndexError(f"block {b} out of range")
    if dim in (1, 2):
        return index.block_range(b, dim)
    return index.sources(b, dim)


def _grouped(cand: np.ndarray, nv: int, labels: np.ndarray, nb: int):
    keys = np.unique(encode(cand, nv))
    # decode back to rows
    k = cand.shape[-1]
    rows = np.empty((len(keys), k), dtype=np.int64)
    rest = keys.copy()
    for i in range(k - 1, -1, -1):
        rows[:, i] = rest % nv
        rest //= nv
    block = labels[rows[:, 0]]
    order = np.argsort(block, kind="stable")  # keys already sorted inside a block
    rows = rows[order].astype(np.int32)
    s = np.cumsum(np.bincount(block, minlength=nb)).astype(np.int64)
    return rows, s


def build_block_index(mesh: Mesh) -> BlockIndex:
    if mesh.block_of is None:
        raise MeshError("mesh has no block labels; run a partitioner first")
    nv, nb = mesh.n_vertices, mesh.n_blocks
    if nv ** 3 >= _KEY_LIMIT:
        raise MeshError("too many vertices for 64-bit triangle keys")
    labels = mesh.block_of
    tets = np.sort(mesh.tets, axis=1).astype(np.int32)
    edges, s_edge = _grouped(_faces(tets, 2).reshape(-1, 2), nv, labels, nb)
    triangles, s_tri = _grouped(_faces(tets, 3).reshape(-1, 3), nv, labels, nb)

    tet_block = labels[tets[:, 0]]
    order = np.argsort(tet_block, kind="stable").astype(np.int32)
    bounds = np.concatenate([[0], np.cumsum(np.bincount(tet_block, minlength=nb))])
    internal = [order[bounds[b]:bounds[b + 1]] for b in range(nb)]

    lab = labels[tets].astype(np.int64)
    tid = np.repeat(np.arange(len(tets), dtype=np.int64), 4)
    lab = lab.ravel()
    keep = lab != np.repeat(tet_block, 4)
    pair = np.unique(lab[keep] * len(tets) + tid[keep])
    ext_block, ext_tet = pair // len(tets), (pair % len(tets)).astype(np.int32)
    eb = np.searchsorted(ext_block, np.arange(nb + 1))
    external = [ext_tet[eb[b]:eb[b + 1]] for b in range(nb)]
    return BlockIndex(mesh, tets, edges, triangles, s_edge, s_tri, internal, external)
