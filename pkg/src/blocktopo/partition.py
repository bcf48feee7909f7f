"""Vertex-to-block labelling and block adjacency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, MeshError, make_mesh

__all__ = [
    "BlockGraph",
    "build_block_graph",
    "default_block_count",
    "partition_by_index",
    "partition_grid",
    "grid_bins",
]

VERTICES_PER_BLOCK = 5000


@dataclass(frozen=True)
class BlockGraph:
    n_blocks: int
    neighbors: tuple

    def __getitem__(self, b):
        return self.neighbors[b]


def default_block_count(n_vertices: int) -> int:
    return max(1, math.ceil(n_vertices / VERTICES_PER_BLOCK))


def partition_by_index(mesh: Mesh, n_blocks: int) -> np.ndarray:
    """Contiguous chunks of vertex ids: ``v -> floor(v * n_blocks / nV)``."""
    nv = mesh.n_vertices
    if not 1 <= n_blocks <= nv:
        raise MeshError(f"block count {n_blocks} outside [1, {nv}]")
    return (np.arange(nv, dtype=np.int64) * n_blocks // nv).astype(np.int32)


def grid_bins(n_blocks: int) -> tuple:
    """Split a block count into three near-equal axis bin counts."""
    bins = [1, 1, 1]
    n = max(1, n_blocks)
    p = 2
    factors = []
    while n > 1:
        while n % p == 0:
            factors.append(p)
            n //= p
        p += 1
    for f in sorted(factors, reverse=True):
        i = bins.index(min(bins))
        bins[i] *= f
    return tuple(sorted(bins, reverse=True))


def partition_grid(mesh: Mesh, bins) -> Mesh:
    """Axis-aligned binning of vertex coordinates.

    Vertices are renumbered so that each block occupies a contiguous id
    range (blocks numbered in order of first occurrence), which keeps the
    lowest-vertex rule and the minimum-label rule in agreement.  Returns a
    new mesh; empty bins are dropped.
    """
    bins = np.asarray(bins, dtype=np.int64)
    lo = mesh.coords.min(axis=0)
    hi = mesh.coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    cell = np.floor((mesh.coords - lo) / span * bins).astype(np.int64)
    cell = np.minimum(np.maximum(cell, 0), bins - 1)
    flat = cell[:, 0] + bins[0] * (cell[:, 1] + bins[1] * cell[:, 2])
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    labels = rank[inverse.ravel()]
    perm = np.lexsort((np.arange(mesh.n_vertices), labels))  # new -> old
    new_of_old = np.empty_like(perm)
    new_of_old[perm] = np.arange(len(perm))
    scalars = None if mesh.scalars is None else mesh.scalars[perm]
    return make_mesh(mesh.coords[perm], new_of_old[mesh.tets], labels[perm], scalars)


def build_block_graph(mesh: Mesh) -> BlockGraph:
    """Blocks are neighbours when some tetrahedron has vertices in both."""
    if mesh.block_of is None:
        raise MeshError("mesh has no block labels")
    nb = mesh.n_blocks
    lab = mesh.block_of[mesh.tets].astype(np.int64)
    pairs = []
    for i in range(4):
        for j in range(4):
            if i != j:
                a, b = lab[:, i], lab[:, j]
                keep = a != b
                pairs.append(a[keep] * nb + b[keep])
    keys = np.unique(np.concatenate(pairs)) if pairs else np.empty(0, np.int64)
    src, dst = keys // nb, keys % nb
    bounds = np.searchsorted(src, np.arange(nb + 1))
    neighbors = tuple(tuple(dst[bounds[b]:bounds[b + 1]].tolist()) for b in range(nb))
    return BlockGraph(nb, neighbors)


def block_graph_from_index(index) -> BlockGraph:
    """Same graph, derived from the external-tetrahedra lists of a block index.

    Only tetrahedra spanning several blocks are external somewhere, so their
    label sets are exactly the cliques of the graph.
    """
    nb = index.n_blocks
    sets = [set() for _ in range(nb)]
    ext = [t for b in range(nb) for t in index.external_tets[b].tolist()]
    for t in set(ext):
        labs = set(index.block_of_vertex[index.tets[t]].tolist())
        for a in labs:
            sets[a].update(labs - {a})
    return BlockGraph(nb, tuple(tuple(sorted(s)) for s in sets))
