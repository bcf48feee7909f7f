"""Tetrahedral mesh encoding, validation and the ``.tmsh`` text format."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import IO, NamedTuple, Optional, Union

import numpy as np

__all__ = [
    "Mesh",
    "MeshError",
    "MeshFormatError",
    "SimplexRef",
    "block_of_simplex",
    "dump_mesh",
    "is_internal",
    "load_mesh",
    "read_mesh",
    "write_mesh",
]


class MeshError(ValueError):
    """A mesh violates one of its structural invariants."""


class MeshFormatError(MeshError):
    """The text stream does not follow the ``.tmsh`` grammar."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class SimplexRef(NamedTuple):
    dim: int
    id: int


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh.

    ``coords`` is ``(nV, 3)`` float64, ``tets`` is ``(nT, 4)`` int32 and
    ``block_of`` is the per-vertex block label (``None`` until a partitioner
    has been applied).  ``scalars`` is an optional per-vertex field.
    """

    coords: np.ndarray
    tets: np.ndarray
    block_of: Optional[np.ndarray] = None
    scalars: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("coords", "tets", "block_of", "scalars"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_blocks(self) -> int:
        if self.block_of is None:
            return 0
        return int(self.block_of.max()) + 1 if len(self.block_of) else 0

    def with_blocks(self, labels) -> "Mesh":
        labels = np.asarray(labels, dtype=np.int32)
        mesh = Mesh(self.coords, self.tets, labels.copy(), self.scalars)
        validate(mesh)
        return mesh

    def with_scalars(self, values) -> "Mesh":
        values = np.asarray(values, dtype=np.float64).copy()
        if values.shape != (self.n_vertices,):
            raise MeshError("scalar field must have one value per vertex")
        return Mesh(self.coords, self.tets, self.block_of, values)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (same(self.coords, other.coords) and same(self.tets, other.tets)
                and same(self.block_of, other.block_of)
                and same(self.scalars, other.scalars))

    __hash__ = None


def make_mesh(coords, tets, block_of=None, scalars=None) -> Mesh:
    """Build and validate a mesh from array-likes."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3).copy()
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    if tets.size and (tets.min() < 0 or tets.max() >= len(coords)):
        raise MeshError("vertex index out of range")
    tets = tets.astype(np.int32)
    if block_of is not None:
        block_of = np.asarray(block_of, dtype=np.int32).copy()
    if scalars is not None:
        scalars = np.asarray(scalars, dtype=np.float64).copy()
    mesh = Mesh(coords, tets, block_of, scalars)
    validate(mesh)
    return mesh


def validate(mesh: Mesh) -> None:
    nv = mesh.n_vertices
    tets = mesh.tets
    if tets.ndim != 2 or tets.shape[1] != 4:
        raise MeshError("tetrahedra must have 4 vertices")
    if len(tets) == 0:
        raise MeshError("mesh has no tetrahedra")
    if tets.min() < 0 or tets.max() >= nv:
        raise MeshError("vertex index out of range")
    srt = np.sort(tets, axis=1)
    if np.any(srt[:, 1:] == srt[:, :-1]):
        raise MeshError("tetrahedron with repeated vertex")
    if len(np.unique(srt, axis=0)) != len(srt):
        raise MeshError("duplicate tetrahedron")
    used = np.zeros(nv, dtype=bool)
    used[tets.ravel()] = True
    if not used.all():
        raise MeshError(f"isolated vertex {int(np.argmin(used))}")
    if mesh.scalars is not None and mesh.scalars.shape != (nv,):
        raise MeshError("scalar field must have one value per vertex")
    labels = mesh.block_of
    if labels is None:
        return
    if labels.shape != (nv,):
        raise MeshError("every vertex needs exactly one block label")
    if labels.min() < 0:
        raise MeshError("negative block label")
    counts = np.bincount(labels)
    if np.any(counts == 0):
        raise MeshError(f"block {int(np.argmin(counts))} has no vertex")
    # lowest-vertex block must be the minimum label, for every face of every tet
    lab = labels[srt]
    for i in range(4):
        for j in range(i + 1, 4):
            if np.any(lab[:, i] > lab[:, j]):
                raise MeshError(
                    "block labels disagree with vertex order: the lowest "
                    "vertex of a simplex must carry its minimum label")


def block_of_simplex(mesh: Mesh, s: SimplexRef, block_index=None) -> int:
    """Block containing ``s``: the minimum label over its vertices."""
    verts = _simplex_vertices(mesh, s, block_index)
    return int(min(int(mesh.block_of[v]) for v in verts))


def is_internal(mesh: Mesh, s: SimplexRef, b: int, block_index=None) -> bool:
    """True iff the lowest-index vertex of ``s`` is labelled ``b``."""
    verts = _simplex_vertices(mesh, s, block_index)
    return int(mesh.block_of[min(verts)]) == b


def _simplex_vertices(mesh, s, block_index):
    dim, sid = s
    if dim == 0:
        return (sid,)
    if dim == 3:
        return tuple(int(v) for v in mesh.tets[sid])
    if block_index is None:
        raise ValueError("edges and triangles need a block index")
    return block_index.vertices(dim, sid)


# ----------------------------------------------------------------------------
# text format


def load_mesh(source: Union[str, bytes, IO]) -> Mesh:
    """Parse a ``.tmsh`` stream (text, bytes or file object)."""
    if isinstance(source, bytes):
        source = source.decode("ascii")
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = _Lines(source)

    tok = lines.next_tokens()
    if tok != ["tmsh", "1"]:
        raise MeshFormatError(lines.lineno, "expected header 'tmsh 1'")
    nv = lines.section("vertices")
    coords = lines.rows(nv, 3, float)
    nt = lines.section("tets")
    tets = lines.rows(nt, 4, int)
    block_of = scalars = None
    declared = None
    while True:
        tok = lines.next_tokens(eof_ok=True)
        if tok is None:
            break
        if tok[0] == "blocks" and len(tok) == 2 and block_of is None:
            declared = _count(lines, tok[1])
            block_of = lines.rows(nv, 1, int).ravel()
            if nv and int(block_of.max()) + 1 != declared:
                raise MeshFormatError(lines.lineno, f"blocks section declares {declared} "
                                      f"blocks but labels use {int(block_of.max()) + 1}")
        elif tok == ["scalars"] and scalars is None:
            scalars = lines.rows(nv, 1, float).ravel()
        else:
            raise MeshFormatError(lines.lineno, f"unexpected section {' '.join(tok)!r}")
    if tets.size and (tets.min() < 0 or tets.max() >= nv):
        raise MeshError("vertex index out of range")
    return make_mesh(coords, tets, block_of, scalars)


def read_mesh(path) -> Mesh:
    with open(path, "r", encoding="ascii") as fh:
        return load_mesh(fh)


def dump_mesh(mesh: Mesh) -> str:
    out = io.StringIO()
    out.write("tmsh 1\n")
    out.write(f"vertices {mesh.n_vertices}\n")
    for x, y, z in mesh.coords.tolist():
        out.write(f"{x!r} {y!r} {z!r}\n")
    out.write(f"tets {mesh.n_tets}\n")
    for a, b, c, d in mesh.tets.tolist():
        out.write(f"{a} {b} {c} {d}\n")
    if mesh.block_of is not None:
        out.write(f"blocks {mesh.n_blocks}\n")
        out.write("".join(f"{b}\n" for b in mesh.block_of.tolist()))
    if mesh.scalars is not None:
        out.write("scalars\n")
        out.write("".join(f"{v!r}\n" for v in mesh.scalars.tolist()))
    return out.getvalue()


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_mesh(mesh))


def _count(lines, text):
    try:
        n = int(text)
    except ValueError:
        raise MeshFormatError(lines.lineno, f"bad count {text!r}") from None
    if n < 0:
        raise MeshFormatError(lines.lineno, "negative count")
    return n


class _Lines:
    def __init__(self, fh):
        self._fh = fh
        self.lineno = 0

    def next_tokens(self, eof_ok=False):
        for line in self._fh:
            self.lineno += 1
            line = line.split("#", 1)[0].strip()
            if line:
                return line.split()
        if eof_ok:
            return None
        raise MeshFormatError(self.lineno + 1, "unexpected end of file")

    def section(self, name):
        tok = self.next_tokens()
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(self.lineno, f"expected '{name} <count>'")
        return _count(self, tok[1])

    def rows(self, n, width, conv):
        out = np.empty((n, width), dtype=np.float64 if conv is float else np.int64)
        for i in range(n):
            tok = self.next_tokens()
            if len(tok) != width:
                raise MeshFormatError(self.lineno, f"expected {width} values, got {len(tok)}")
            try:
                out[i] = [conv(t) for t in tok]
            except ValueError:
                raise MeshFormatError(self.lineno, f"bad value in {' '.join(tok)!r}") from None
        return out
