"""Synthetic tetrahedral grids."""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .mesh import Mesh, MeshError, make_mesh

__all__ = ["generate_grid_mesh", "parse_grid_spec"]

_LIMIT = 2 ** 63


def _kuhn_corners():
    """Six tetrahedra of the unit cube as corner bit-triples (x, y, z)."""
    out = []
    for perm in permutations(range(3)):
        c = [0, 0, 0]
        tet = [tuple(c)]
        for axis in perm:
            c[axis] = 1
            tet.append(tuple(c))
        out.append(tet)
    return np.array(out, dtype=np.int64)  # (6, 4, 3)


def generate_grid_mesh(nx: int, ny: int, nz: int, seed=None) -> Mesh:
    """Tetrahedralize an ``nx x ny x nz`` vertex grid.

    Each cube is cut into six tetrahedra along its main diagonal, with the
    pattern mirrored in every axis between neighbouring cubes so that shared
    square faces are split along the same diagonal.  Vertex ``(i, j, k)`` has
    id ``i + nx * (j + ny * k)``.  With a ``seed`` the mesh carries a uniform
    random scalar field drawn from it.
    """
    dims = (nx, ny, nz)
    if min(dims) < 1:
        raise MeshError("grid dimensions must be at least 1")
    if min(dims) < 2:
        raise MeshError("empty tetrahedralization")
    nv = nx * ny * nz
    ncubes = (nx - 1) * (ny - 1) * (nz - 1)
    if nv ** 3 >= _LIMIT or 6 * ncubes >= 2 ** 31:
        raise MeshError("grid too large: simplex ids would overflow")

    # cubes enumerated x fastest, like vertices
    k, j, i = np.meshgrid(np.arange(nz - 1), np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
    origin = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)  # (ncubes, 3)
    flip = origin % 2
    corners = _kuhn_corners()
    # mirrored corner offset: bit ^ parity of the cube along that axis
    offs = corners[None, :, :, :] ^ flip[:, None, None, :]
    pos = origin[:, None, None, :] + offs
    ids = pos[..., 0] + nx * (pos[..., 1] + ny * pos[..., 2])
    tets = ids.reshape(-1, 4)

    gi, gj, gk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    coords = np.empty((nv, 3), dtype=np.float64)
    flat = (gi + nx * (gj + ny * gk)).ravel()
    coords[flat, 0] = gi.ravel()
    coords[flat, 1] = gj.ravel()
    coords[flat, 2] = gk.ravel()
    scalars = None
    if seed is not None:
        scalars = np.random.default_rng(seed).random(nv)
    return make_mesh(coords, tets, scalars=scalars)


def parse_grid_spec(text: str) -> tuple:
    """``"nx,ny,nz"`` (or a single ``n`` for a cube) to a triple of ints."""
    parts = [int(p) for p in text.replace("x", ",").split(",") if p.strip()]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise ValueError(f"bad grid size {text!r}")
    return tuple(parts)
