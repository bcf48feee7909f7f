"""Consumer algorithms, written against a request-only topology interface.

Every workload exposes ``required_kinds``, ``run(access, part, n_parts)``
working on a contiguous slice of its iteration space, and ``merge`` which
combines the per-consumer partial results in slice order.
"""

from __future__ import annotations

import hashlib
import heapq
import threading
import time
from dataclasses import dataclass

import numpy as np

from .relations import RelationKind as K

__all__ = [
    "CriticalPointReport",
    "CriticalPoints",
    "DiscreteGradient",
    "GradientCycleError",
    "GradientField",
    "RelationSweep",
    "ScalarField",
    "TopologyAccess",
    "VPathResult",
    "VPathTraversal",
    "WORKLOADS",
    "critical_points",
    "discrete_gradient",
    "make_workload",
    "run_consumers",
    "split_range",
    "sweep_all_relations",
    "vpath_traversal",
]

MASK64 = (1 << 64) - 1

SWEEP_KINDS = {
    0: (K.VE, K.VF, K.VT),
    1: (K.EV, K.EF, K.ET),
    2: (K.FV, K.FE, K.FT),
    3: (K.TV, K.TE, K.TF),
}

MINIMUM, REGULAR, SADDLE, MAXIMUM = 0, 1, 2, 3
POINT_NAMES = ("minimum", "regular", "saddle", "maximum")


class TopologyAccess:
    """What a workload may touch: relation requests plus the static vertex
    lists of simplices (the input tetrahedra and the global E/F lists)."""

    def __init__(self, index):
        self.index = index
        lists = [index.lists(d) for d in range(4)]
        self._block = [l[0] for l in lists]
        self._local = [l[1] for l in lists]
        self._verts = [l[2] for l in lists]
        self._src_dim = [k.source_dim for k in K]

    def count(self, dim: int) -> int:
        return self.index.count(dim)

    def vertices(self, dim: int, sid: int) -> tuple:
        return self._verts[dim][sid]

    def request(self, kind, sid):
        raise NotImplementedError

    def row(self, kind, sid) -> tuple:
        kind = K(kind)
        table = self.request(kind, sid)
        return table.rows[self._local[kind.source_dim][sid]]


def split_range(n: int, part: int, n_parts: int) -> range:
    """Contiguous near-equal slice ``part`` of ``range(n)``."""
    return range(n * part // n_parts, n * (part + 1) // n_parts)


def run_consumers(accesses, workload):
    """Run one consumer per access object and merge in slice order.

    Returns ``(output, per-consumer execute seconds)``.
    """
    n = len(accesses)
    partials = [None] * n
    times = [0.0] * n
    errors = []

    def body(i):
        t0 = time.perf_counter()
        try:
            partials[i] = workload.run(accesses[i], i, n)
        except BaseException as exc:
            errors.append(exc)
        finally:
            times[i] = time.perf_counter() - t0

    if n == 1:
        body(0)
    else:
        threads = [threading.Thread(target=body, args=(i,), name=f"consumer{i}")
                   for i in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    return workload.merge(partials), times


# ----------------------------------------------------------------------------
# scalar field


class ScalarField:
    """Per-vertex values with ties broken by vertex id."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)
        order = np.lexsort((np.arange(len(self.values)), self.values))
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        self.rank = rank
        self.rank_list = rank.tolist()

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_spec(cls, spec: str, mesh) -> "ScalarField":
        """``index``, ``x`` or ``random:<seed>``."""
        if spec == "index":
            return cls(np.arange(mesh.n_vertices, dtype=np.float64))
        if spec == "x":
            return cls(mesh.coords[:, 0])
        if spec.startswith("random:"):
            seed = int(spec.split(":", 1)[1])
            return cls(np.random.default_rng(seed).random(mesh.n_vertices))
        if spec == "file":
            if mesh.scalars is None:
                raise ValueError("mesh has no scalars section")
            return cls(mesh.scalars)
        raise ValueError(f"unknown field {spec!r}")


# ----------------------------------------------------------------------------
# relation sweep


def _row_hash(kind, sid, row):
    return hash((kind, sid, row))


class RelationSweep:
    """Every boundary and coboundary relation of every simplex, one relation
    kind at a time, simplices in ascending id order."""

    name = "relations"
    required_kinds = tuple(k for d in range(4) for k in SWEEP_KINDS[d])

    def run(self, access, part, n_parts):
        acc = 0
        n = 0
        row = access.row
        for dim in range(4):
            ids = split_range(access.count(dim), part, n_parts)
            for kind in SWEEP_KINDS[dim]:
                k = int(kind)
                for sid in ids:
                    acc += hash((k, sid, row(kind, sid)))
                n += len(ids)
        return acc & MASK64, n

    def merge(self, partials):
        return sum(p[0] for p in partials) & MASK64

    @staticmethod
    def checksum(output) -> int:
        return output


def sweep_all_relations(access) -> int:
    return RelationSweep().run(access, 0, 1)[0]


# ----------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPointReport:
    kinds: tuple
    boundary: tuple

    def counts(self) -> dict:
        out = {name: 0 for name in POINT_NAMES}
        for k in self.kinds:
            out[POINT_NAMES[k]] += 1
        out["boundary"] = sum(self.boundary)
        return out

    def of(self, v) -> str:
        return POINT_NAMES[self.kinds[v]]

    def checksum(self) -> int:
        data = np.asarray(self.kinds, dtype=np.int8).tobytes() + np.asarray(
            self.boundary, dtype=np.int8).tobytes()
        return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _components(members, edges):
    parent = {u: u for u in members}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    n = len(parent)
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            n -= 1
    return n


def classify_vertex(access, v, rank):
    r = rank[v]
    nbrs = access.row(K.VV, v)
    lower = [u for u in nbrs if rank[u] < r]
    if not lower:
        return MINIMUM
    upper = [u for u in nbrs if rank[u] > r]
    if not upper:
        return MAXIMUM
    low_edges = []
    up_edges = []
    verts = access.vertices
    for t in access.row(K.VT, v):
        a, b, c = [u for u in verts(3, t) if u != v]
        for x, y in ((a, b), (a, c), (b, c)):
            if rank[x] < r:
                if rank[y] < r:
                    low_edges.append((x, y))
            elif rank[y] > r:
                up_edges.append((x, y))
    if _components(lower, low_edges) == 1 and _components(upper, up_edges) == 1:
        return REGULAR
    return SADDLE


def is_boundary_vertex(access, v):
    row = access.row
    for f in row(K.VF, v):
        if len(row(K.FT, f)) == 1:
            return True
    return False


class CriticalPoints:
    """Piecewise-linear critical point classification from vertex links."""

    name = "critical-points"
    required_kinds = (K.VV, K.VF, K.VT, K.FT)

    def __init__(self, field: ScalarField):
        self.field = field

    def run(self, access, part, n_parts):
        rank = self.field.rank_list
        kinds = []
        bnd = []
        for v in split_range(access.count(0), part, n_parts):
            kinds.append(classify_vertex(access, v, rank))
            bnd.append(is_boundary_vertex(access, v))
        return kinds, bnd

    def merge(self, partials):
        kinds, bnd = [], []
        for k, b in partials:
            kinds.extend(k)
            bnd.extend(b)
        return CriticalPointReport(tuple(kinds), tuple(bnd))

    @staticmethod
    def checksum(output) -> int:
        return output.checksum()


def critical_points(access, field: ScalarField) -> CriticalPointReport:
    w = CriticalPoints(field)
    return w.merge([w.run(access, 0, 1)])


# ----------------------------------------------------------------------------
# discrete gradient


class GradientField:
    """Pairing of each simplex with a face or coface, or none (critical).

    ``up[d][s]`` is the (d+1)-coface paired with d-simplex ``s`` and
    ``down[d][s]`` the (d-1)-face paired with it; -1 means no pair.
    """

    def __init__(self, counts):
        self.counts = tuple(counts)
        self.up = [np.full(n, -1, dtype=np.int64) for n in self.counts]
        self.down = [np.full(n, -1, dtype=np.int64) for n in self.counts]

    def pair(self, dim, lo, hi):
        if self.up[dim][lo] != -1 or self.down[dim + 1][hi] != -1:
            raise ValueError(f"simplex paired twice: dim {dim} id {lo} / {hi}")
        self.up[dim][lo] = hi
        self.down[dim + 1][hi] = lo

    def is_critical(self, dim, sid) -> bool:
        return self.up[dim][sid] == -1 and self.down[dim][sid] == -1

    def critical(self, dim) -> np.ndarray:
        return np.flatnonzero((self.up[dim] == -1) & (self.down[dim] == -1))

    def critical_counts(self) -> tuple:
        return tuple(len(self.critical(d)) for d in range(4))

    def pairs(self):
        for d in range(3):
            for lo in np.flatnonzero(self.up[d] != -1).tolist():
                yield d, lo, int(self.up[d][lo])

    def __eq__(self, other):
        if not isinstance(other, GradientField):
            return NotImplemented
        return self.counts == other.counts and all(
            np.array_equal(a, b) for a, b in zip(self.up + self.down, other.up + other.down))

    __hash__ = None

    def checksum(self) -> int:
        h = hashlib.blake2b(digest_size=8)
        for a in self.up:
            h.update(a.tobytes())
        return int.from_bytes(h.digest(), "little")


def lower_star_pairs(access, v, rank):
    """Greedy pairing inside the lower star of ``v``.

    Returns ``(pairs, critical)`` with pairs as ``(dim, lo_id, hi_id)`` and
    critical simplices as ``(dim, id)``.
    """
    r = rank[v]
    verts = access.vertices
    row = access.row
    key = {}

    def lower(dim, ids):
        out = []
        for s in ids:
            rs = sorted((rank[u] for u in verts(dim, s)), reverse=True)
            if rs[0] == r:
                out.append(s)
                key[(dim, s)] = tuple(rs)
        return out

    l_edges = lower(1, row(K.VE, v))
    if not l_edges:
        return [], [(0, v)]
    l_tris = lower(2, row(K.VF, v))
    l_tets = lower(3, row(K.VT, v))
    in_l = {1: set(l_edges), 2: set(l_tris), 3: set(l_tets)}
    face_kind = {2: K.FE, 3: K.TF}
    coface_kind = {1: K.EF, 2: K.FT}
    faces_memo = {}
    cofaces_memo = {}

    def faces(s):
        got = faces_memo.get(s)
        if got is None:
            d, i = s
            got = [] if d == 1 else [(d - 1, f) for f in row(face_kind[d], i) if f in in_l[d - 1]]
            faces_memo[s] = got
        return got

    def cofaces(s):
        got = cofaces_memo.get(s)
        if got is None:
            d, i = s
            got = [] if d == 3 else [(d + 1, c) for c in row(coface_kind[d], i) if c in in_l[d + 1]]
            cofaces_memo[s] = got
        return got

    done = set()
    pairs = []
    critical = []

    def unpaired(s):
        return [f for f in faces(s) if f not in done]

    delta = min(l_edges, key=lambda e: key[(1, e)])
    pairs.append((0, v, delta))
    done.add((1, delta))
    pq_zero = [(key[(1, e)], (1, e)) for e in l_edges if e != delta]
    heapq.heapify(pq_zero)
    pq_one = []

    def push_ready(s):
        for c in cofaces(s):
            if c not in done and len(unpaired(c)) == 1:
                heapq.heappush(pq_one, (key[c], c))

    push_ready((1, delta))
    while pq_one or pq_zero:
        while pq_one:
            _, alpha = heapq.heappop(pq_one)
            if alpha in done:
                continue
            free = unpaired(alpha)
            if not free:
                heapq.heappush(pq_zero, (key[alpha], alpha))
                continue
            beta = free[0]
            pairs.append((beta[0], beta[1], alpha[1]))
            done.add(alpha)
            done.add(beta)
            push_ready(alpha)
            push_ready(beta)
        while pq_zero:
            _, gamma = heapq.heappop(pq_zero)
            if gamma in done:
                continue
            critical.append(gamma)
            done.add(gamma)
            push_ready(gamma)
            break
    return pairs, critical


class DiscreteGradient:
    """Lower-star discrete gradient, one vertex's lower star at a time."""

    name = "discrete-gradient"
    required_kinds = (K.VE, K.VF, K.VT, K.EF, K.FE, K.FT, K.TF)

    def __init__(self, field: ScalarField):
        self.field = field
        self._counts = None

    def run(self, access, part, n_parts):
        rank = self.field.rank_list
        self._counts = tuple(access.count(d) for d in range(4))
        out = []
        for v in split_range(access.count(0), part, n_parts):
            out.append(lower_star_pairs(access, v, rank))
        return out

    def merge(self, partials):
        grad = GradientField(self._counts)
        for part in partials:
            for pairs, _ in part:
                for d, lo, hi in pairs:
                    grad.pair(d, lo, hi)
        return grad

    @staticmethod
    def checksum(output) -> int:
        return output.checksum()


def discrete_gradient(access, field: ScalarField) -> GradientField:
    w = DiscreteGradient(field)
    return w.merge([w.run(access, 0, 1)])


# ----------------------------------------------------------------------------
# V-path traversal


class GradientCycleError(RuntimeError):
    """A descending V-path revisited a vertex: the gradient is not acyclic."""


@dataclass(frozen=True)
class VPathResult:
    steps: int
    ends: tuple

    def checksum(self) -> int:
        data = np.asarray((self.steps,) + self.ends, dtype=np.int64).tobytes()
        return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


class VPathTraversal:
    """Descending 0/1 V-paths from every critical edge down to minima."""

    name = "vpath"
    required_kinds = (K.EV,)

    def __init__(self, gradient: GradientField):
        self.gradient = gradient
        self.sources = gradient.critical(1).tolist()

    def run(self, access, part, n_parts):
        pair_edge = self.gradient.up[0]
        steps = 0
        ends = []
        for i in split_range(len(self.sources), part, n_parts):
            e = self.sources[i]
            for u in access.row(K.EV, e):
                seen = {u}
                while True:
                    nxt = int(pair_edge[u])
                    if nxt == -1:
                        break
                    a, b = access.row(K.EV, nxt)
                    u = b if a == u else a
                    steps += 1
                    if u in seen:
                        raise GradientCycleError(f"V-path from edge {e} revisits vertex {u}")
                    seen.add(u)
                ends.append(u)
        return steps, ends

    def merge(self, partials):
        return VPathResult(sum(p[0] for p in partials), tuple(u for p in partials for u in p[1]))

    @staticmethod
    def checksum(output) -> int:
        return output.checksum()


def vpath_traversal(access, gradient: GradientField) -> VPathResult:
    w = VPathTraversal(gradient)
    return w.merge([w.run(access, 0, 1)])


WORKLOADS = ("relations", "critical-points", "discrete-gradient", "vpath")


def make_workload(name, field=None, gradient=None):
    if name == "relations":
        return RelationSweep()
    if name == "critical-points":
        return CriticalPoints(field)
    if name == "discrete-gradient":
        return DiscreteGradient(field)
    if name == "vpath":
        if gradient is None:
            raise ValueError("vpath needs a precomputed gradient")
        return VPathTraversal(gradient)
    raise ValueError(f"unknown workload {name!r}")
