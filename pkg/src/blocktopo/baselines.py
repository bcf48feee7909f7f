"""Reference structures: precompute-everything and on-demand without threads."""

from __future__ import annotations

from .buffer import Buffer
from .relations import RelationKind, compute_relation
from .workloads import TopologyAccess, run_consumers

__all__ = [
    "OnDemandTopology",
    "StaticTopology",
    "ondemand_request",
    "run_ondemand",
    "run_static",
    "static_build",
]


class StaticTopology(TopologyAccess):
    """Every requested relation materialized for every block up front.

    Immutable after construction, so one instance can serve any number of
    consumer threads.
    """

    def __init__(self, mesh, index, kinds=None):
        super().__init__(index)
        kinds = tuple(RelationKind) if kinds is None else tuple(RelationKind(k) for k in kinds)
        self.kinds = kinds
        tables = {}
        for b in range(index.n_blocks):
            for k in kinds:
                tables[b * 16 + k] = compute_relation(mesh, index, b, k)
        self.tables = tables
        self.computations = len(tables)
        self.table_bytes = sum(t.nbytes for t in tables.values())

    @property
    def nbytes(self) -> int:
        return self.table_bytes + self.index.nbytes

    def table(self, b, kind):
        return self.tables[b * 16 + RelationKind(kind)]

    def request(self, kind, sid):
        kind = RelationKind(kind)
        b = self._block[kind.source_dim][sid]
        try:
            return self.tables[b * 16 + kind]
        except KeyError:
            raise ValueError(f"relation {kind.name} was not materialized") from None

    def row(self, kind, sid):
        d = self._src_dim[kind]
        table = self.tables.get(self._block[d][sid] * 16 + kind)
        if table is None:
            return self.request(kind, sid).rows[self._local[d][sid]]
        return table.rows[self._local[d][sid]]


def static_build(mesh, index, required_kinds=None, full=False) -> StaticTopology:
    """``full=True`` materializes all sixteen kinds regardless of the request."""
    return StaticTopology(mesh, index, None if full or required_kinds is None else required_kinds)


class OnDemandTopology(TopologyAccess):
    """Block-local tables computed by the caller on a miss and kept in a
    FIFO buffer with the same eviction policy the engine uses."""

    def __init__(self, mesh, index, capacity, exempt_working=True, kernel=compute_relation):
        super().__init__(index)
        self.mesh = mesh
        self.kernel = kernel
        self.buffer = Buffer(capacity, exempt_working=exempt_working)
        self._tables_get = self.buffer.tables.get
        self.computations = 0
        self.requests = 0

    def request(self, kind, sid):
        kind = RelationKind(kind)
        return self._fetch(self._block[kind.source_dim][sid], kind)

    def _fetch(self, b, kind):
        buf = self.buffer
        buf.working_block = b
        self.requests += 1
        table = self._tables_get(b * 16 + kind)
        if table is None:
            table = self.kernel(self.mesh, self.index, b, kind)
            self.computations += 1
            buf.insert(b, kind, table)
        return table

    def row(self, kind, sid):
        d = self._src_dim[kind]
        b = self._block[d][sid]
        table = self._tables_get(b * 16 + kind)
        if table is None:
            table = self._fetch(b, RelationKind(kind))
        else:
            self.buffer.working_block = b
            self.requests += 1
        return table.rows[self._local[d][sid]]


def ondemand_request(topo: OnDemandTopology, s, kind):
    """Table of ``kind`` for the block owning simplex ``s = (dim, id)``."""
    dim, sid = s
    kind = RelationKind(kind)
    if kind.source_dim != dim:
        raise ValueError(f"{kind.name} takes {'VEFT'[kind.source_dim]} sources, got dimension {dim}")
    return topo.request(kind, sid)


def run_static(topo: StaticTopology, workload, consumers=1):
    return run_consumers([topo] * consumers, workload)


def run_ondemand(mesh, index, workload, capacity, consumers=1):
    """One private on-demand instance per consumer thread.

    Returns ``(output, times, instances)``.
    """
    tops = [OnDemandTopology(mesh, index, capacity) for _ in range(consumers)]
    output, times = run_consumers(tops, workload)
    return output, times, tops
