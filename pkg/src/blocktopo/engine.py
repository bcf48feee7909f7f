"""Producer/consumer engine.

One consumer group = one consumer (the thread running the workload), one
leader producer serving its misses, and ``t_pc - 1`` worker producers that
prefetch relation tables into the group's private buffer.  Workers take
turns on a shared cursor ``(b_i, r_j)``: a claim reads the cursor, advances
it for the next claimant and releases the lock before computing.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .buffer import Buffer
from .relations import RelationKind, compute_relation
from .workloads import TopologyAccess, run_consumers

__all__ = [
    "Cursor",
    "ConsumerGroup",
    "EngineConfig",
    "EngineMetrics",
    "EngineStopped",
    "MODES",
    "bfs_order",
    "run_workload",
]

log = logging.getLogger(__name__)

MODES = ("linear-single", "linear-all", "spatial-single", "spatial-all")


class EngineStopped(RuntimeError):
    """Raised by ``request`` once the group has been shut down."""


@dataclass
class EngineConfig:
    direction: str = "linear"
    scope: str = "single"
    required_kinds: tuple = ()
    workers_per_consumer: int = 0
    consumers: int = 1
    buffer_capacity: int = 1
    exempt_working: bool = True

    def __post_init__(self):
        if self.direction not in ("linear", "spatial"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.scope not in ("single", "all"):
            raise ValueError(f"unknown scope {self.scope!r}")
        self.required_kinds = tuple(RelationKind(k) for k in self.required_kinds)
        if not self.required_kinds:
            raise ValueError("a workload must declare at least one relation kind")
        if self.workers_per_consumer < 0 or self.consumers < 1:
            raise ValueError("need t_c >= 1 consumers and t_pc >= 1 producers each")
        if self.buffer_capacity < 1:
            raise ValueError("buffer capacity must be at least one block")

    @classmethod
    def from_mode(cls, mode: str, producers: int = 1, **kw) -> "EngineConfig":
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        direction, scope = mode.split("-")
        return cls(direction=direction, scope=scope, workers_per_consumer=producers - 1, **kw)

    @property
    def mode(self) -> str:
        return f"{self.direction}-{self.scope}"

    @property
    def producers_per_consumer(self) -> int:
        return self.workers_per_consumer + 1

    @property
    def total_threads(self) -> int:
        return self.consumers + self.consumers * self.producers_per_consumer


def bfs_order(graph, origin: int) -> list:
    """Breadth-first block order from ``origin``, neighbours ascending;
    blocks unreachable from ``origin`` follow in ascending order."""
    n = graph.n_blocks
    seen = [False] * n
    seen[origin] = True
    order = [origin]
    todo = deque([origin])
    while todo:
        b = todo.popleft()
        for nb in graph.neighbors[b]:
            if not seen[nb]:
                seen[nb] = True
                order.append(nb)
                todo.append(nb)
    order.extend(b for b in range(n) if not seen[b])
    return order


class Cursor:
    """Shared prefetch cursor.  Not synchronized itself; the owning group
    serializes every call under its lock.

    ``capacity`` (block count) bounds prefetching: a worker may start on a
    block that is not yet resident only while the buffer has a free block
    slot, so prefetching never evicts anything the consumer asked for.
    """

    def __init__(self, n_blocks, kinds, direction="linear", scope="single",
                 graph=None, capacity=None):
        self.n_blocks = n_blocks
        self.kinds = tuple(RelationKind(k) for k in kinds)
        self.direction = direction
        self.scope = scope
        self.capacity = capacity
        self.graph = graph
        if direction == "spatial" and graph is None:
            raise ValueError("spatial direction needs a block graph")
        self.b_i = 0
        self.r_j = 0
        self.single_kind = self.kinds[0]
        self._orders = {}
        self._order = None
        self._pos = 0
        if direction == "spatial":
            self._set_origin(0)
        self.in_flight = {}
        self._flight_blocks = {}
        self.failed = set()  # keys a worker could not compute; left to the leader

    def _set_origin(self, b):
        order = self._orders.get(b)
        if order is None:
            order = self._orders[b] = bfs_order(self.graph, b)
        self._order = order
        self._pos = 0
        self.b_i = b

    def _step_block(self):
        if self.direction == "linear":
            self.b_i = (self.b_i + 1) % self.n_blocks
        else:
            self._pos = (self._pos + 1) % len(self._order)
            self.b_i = self._order[self._pos]

    def peek(self):
        if self.scope == "single":
            return self.b_i, self.single_kind
        return self.b_i, self.kinds[self.r_j]

    def advance(self):
        if self.scope == "single":
            self._step_block()
            return
        self.r_j += 1
        if self.r_j == len(self.kinds):
            self.r_j = 0
            self._step_block()

    def redirect(self, b, kind):
        """Leader steering after a miss: restart the walk at ``b``."""
        if self.direction == "linear":
            self.b_i = b
        else:
            self._set_origin(b)
        self.r_j = 0
        if kind in self.kinds:
            self.single_kind = RelationKind(kind)

    def claim(self, resident, block_present, n_resident=0):
        """Next (block, kind) to compute, or ``None`` when nothing is admissible.

        ``resident(b, k)`` and ``block_present(b)`` query the buffer,
        ``n_resident`` is its current block count.
        """
        per_block = 1 if self.scope == "single" else len(self.kinds)
        for _ in range(self.n_blocks * per_block):
            b, k = self.peek()
            key = (b, k)
            if key in self.in_flight or key in self.failed or resident(b, k):
                self.advance()
                continue
            if self.capacity is not None and not block_present(b):
                pending = sum(1 for fb in self._flight_blocks if not block_present(fb))
                if b not in self._flight_blocks and n_resident + pending >= self.capacity:
                    return None
            self.advance()
            self.acquire(b, k)
            return key
        return None

    def acquire(self, b, k, flight=True):
        self.in_flight[(b, k)] = flight
        self._flight_blocks[b] = self._flight_blocks.get(b, 0) + 1

    def release(self, b, k):
        self.in_flight.pop((b, k), None)
        n = self._flight_blocks.get(b, 0) - 1
        if n > 0:
            self._flight_blocks[b] = n
        else:
            self._flight_blocks.pop(b, None)


class _Flight:
    __slots__ = ("done", "table")

    def __init__(self):
        self.done = threading.Event()
        self.table = None


class _Slot:
    __slots__ = ("done", "table", "error")

    def __init__(self):
        self.done = threading.Event()
        self.table = None
        self.error = None


_STOP = object()


@dataclass
class GroupStats:
    requests: int = 0
    misses: int = 0
    wait_time: float = 0.0
    leader_computations: int = 0
    worker_computations: int = 0


class ConsumerGroup(TopologyAccess):
    """A consumer's private view: buffer, cursor, leader and workers."""

    def __init__(self, mesh, index, config: EngineConfig, graph=None, name="g0",
                 kernel=compute_relation, trace=None):
        super().__init__(index)
        self.mesh = mesh
        self.config = config
        self.name = name
        self.kernel = kernel
        cap = config.buffer_capacity
        self.buffer = Buffer(cap, exempt_working=config.exempt_working)
        self.cursor = Cursor(index.n_blocks, config.required_kinds, config.direction,
                             config.scope, graph, capacity=cap)
        self.stats = GroupStats()
        self.trace = trace
        self.current_block = None
        self._cond = threading.Condition()
        self._requests = queue.SimpleQueue()
        self._stopping = False
        self._leader = None
        self._workers = []
        self._tables_get = self.buffer.tables.get

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        self._leader = threading.Thread(target=self.leader_loop, name=f"{self.name}-leader",
                                        daemon=True)
        self._leader.start()
        return self

    def shutdown(self):
        if self._leader is None:
            return
        self._requests.put(_STOP)
        self._leader.join()
        self._leader = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()

    # -- consumer side -----------------------------------------------------

    def _enter(self, b):
        with self._cond:
            self.current_block = b
            self.buffer.working_block = b

    def request(self, kind, sid):
        kind = RelationKind(kind)
        d = kind.source_dim
        b = self._block[d][sid]
        if b != self.current_block:
            self._enter(b)
        self.stats.requests += 1
        table = self._tables_get(b * 16 + kind)
        if table is None:
            table = self._miss(b, kind)
        return table

    def row(self, kind, sid):
        d = self._src_dim[kind]
        b = self._block[d][sid]
        if b != self.current_block:
            self._enter(b)
        self.stats.requests += 1
        table = self._tables_get(b * 16 + kind)
        if table is None:
            table = self._miss(b, kind)
        return table.rows[self._local[d][sid]]

    def _miss(self, b, kind):
        if self._leader is None:
            raise EngineStopped("consumer group is not running")
        if kind not in self.config.required_kinds:
            raise ValueError(f"relation {RelationKind(kind).name} was not declared by the workload")
        slot = _Slot()
        t0 = time.perf_counter()
        self._requests.put((b, RelationKind(kind), slot))
        slot.done.wait()
        self.stats.wait_time += time.perf_counter() - t0
        self.stats.misses += 1
        if slot.error is not None:
            raise slot.error
        return slot.table

    # -- producers ---------------------------------------------------------

    def leader_loop(self):
        workers = [threading.Thread(target=self.worker_loop, name=f"{self.name}-worker{i}",
                                    daemon=True)
                   for i in range(self.config.workers_per_consumer)]
        self._workers = workers
        for w in workers:
            w.start()
        try:
            while True:
                item = self._requests.get()
                if item is _STOP:
                    break
                b, kind, slot = item
                try:
                    slot.table = self._serve(b, kind)
                except BaseException as exc:  # handed to the consumer
                    slot.error = exc
                slot.done.set()
                with self._cond:
                    self.cursor.redirect(b, kind)
                    self._cond.notify_all()
        finally:
            with self._cond:
                self._stopping = True
                self._cond.notify_all()
            for w in workers:
                w.join()
            while True:  # fail anything still queued
                try:
                    item = self._requests.get_nowait()
                except queue.Empty:
                    break
                if item is not _STOP:
                    item[2].error = EngineStopped("consumer group shut down")
                    item[2].done.set()

    def _serve(self, b, kind):
        key = (b, kind)
        while True:
            with self._cond:
                table = self._tables_get(b * 16 + kind)
                if table is not None:
                    return table
                flight = self.cursor.in_flight.get(key)
                if flight is None:
                    flight = _Flight()
                    self.cursor.acquire(b, kind, flight)
                    break
            # a worker is already on it
            flight.done.wait()
            if flight.table is not None:
                return flight.table
        try:
            table = self.kernel(self.mesh, self.index, b, kind)
        except BaseException:
            self._abandon(b, kind, flight)
            raise
        self._publish(b, kind, table, flight, "leader")
        return table

    def _abandon(self, b, kind, flight):
        with self._cond:
            self.cursor.release(b, kind)
            flight.done.set()
            self._cond.notify_all()

    def _publish(self, b, kind, table, flight, role):
        with self._cond:
            if role == "leader":
                self.stats.leader_computations += 1
            else:
                self.stats.worker_computations += 1
            self.buffer.insert(b, kind, table)
            self.cursor.release(b, kind)
            flight.table = table
            flight.done.set()
            self._cond.notify_all()

    def worker_loop(self):
        buf = self.buffer
        while True:
            with self._cond:
                while True:
                    if self._stopping:
                        return
                    claim = self.cursor.claim(buf.contains, buf.has_block, buf.block_count)
                    if claim is not None:
                        break
                    self._cond.wait(0.05)
                b, kind = claim
                flight = _Flight()
                self.cursor.in_flight[claim] = flight
                if self.trace is not None:
                    self.trace.append(claim)
            try:
                table = self.kernel(self.mesh, self.index, b, kind)
            except Exception as exc:
                with self._cond:
                    self.cursor.failed.add(claim)
                self._abandon(b, kind, flight)
                log.warning("worker failed on block %d %s: %s", b, kind.name, exc)
                continue
            self._publish(b, kind, table, flight, "worker")


@dataclass
class EngineMetrics:
    wait_time: list = field(default_factory=list)
    execute_time: list = field(default_factory=list)
    computations: dict = field(default_factory=dict)
    requests: int = 0
    misses: int = 0
    evictions: int = 0
    peak_resident_blocks: int = 0
    peak_buffer_bytes: int = 0

    @classmethod
    def from_groups(cls, groups, execute_time):
        return cls(
            wait_time=[g.stats.wait_time for g in groups],
            execute_time=list(execute_time),
            computations={
                "leader": sum(g.stats.leader_computations for g in groups),
                "worker": sum(g.stats.worker_computations for g in groups),
                "consumer": 0,
            },
            requests=sum(g.stats.requests for g in groups),
            misses=sum(g.stats.misses for g in groups),
            evictions=sum(g.buffer.evicted_blocks for g in groups),
            peak_resident_blocks=max(g.buffer.peak_blocks for g in groups),
            peak_buffer_bytes=sum(g.buffer.peak_nbytes for g in groups),
        )


def run_workload(mesh, index, config: EngineConfig, workload, graph=None, trace=None,
                 wrap=None, kernel=compute_relation):
    """Run ``workload`` on ``config.consumers`` consumer groups.

    Returns ``(output, EngineMetrics)``.  Every thread is joined before
    returning, including when a consumer raises.  ``wrap`` optionally
    decorates each group's access object (used for verification).
    """
    if config.direction == "spatial" and graph is None:
        from .partition import build_block_graph
        graph = build_block_graph(mesh)
    groups = [ConsumerGroup(mesh, index, config, graph, name=f"g{i}", kernel=kernel, trace=trace)
              for i in range(config.consumers)]
    for g in groups:
        g.start()
    try:
        accesses = groups if wrap is None else [wrap(g) for g in groups]
        output, times = run_consumers(accesses, workload)
    finally:
        for g in groups:
            g.shutdown()
    return output, EngineMetrics.from_groups(groups, times)
