"""Bounded FIFO store of relation tables keyed by (block, relation kind)."""

from __future__ import annotations

import math
import threading
from collections import OrderedDict

__all__ = ["Buffer", "BufferMiss", "default_capacity"]

DEFAULT_FRACTION = 0.20


class BufferMiss(LookupError):
    """A table was read that is not resident."""


def default_capacity(n_blocks: int, fraction: float = DEFAULT_FRACTION) -> int:
    return max(1, math.ceil(fraction * n_blocks))


def _key(b, kind):
    return b * 16 + kind


class Buffer:
    """FIFO over blocks with constant-time (block, kind) lookup.

    Capacity counts distinct resident blocks.  Inserting a table for a new
    block into a full buffer first evicts the ceil(capacity/2) blocks that
    entered earliest, skipping ``working_block`` when ``exempt_working`` is
    set.  Reads (``contains``, ``get``, ``tables.get``) never take the lock;
    writers are serialized.
    """

    def __init__(self, capacity: int, exempt_working: bool = True, record: bool = False):
        if capacity < 1:
            raise ValueError("buffer capacity must be at least one block")
        self.capacity = int(capacity)
        self.exempt_working = exempt_working
        self.working_block = None
        # read-only for consumers: int key -> RelationTable
        self.tables = {}
        self._blocks = OrderedDict()
        self._lock = threading.Lock()
        self.nbytes = 0
        self.peak_nbytes = 0
        self.peak_blocks = 0
        self.evicted_blocks = 0
        self.batches = [] if record else None

    def __len__(self):
        return len(self.tables)

    def contains(self, b: int, kind) -> bool:
        return _key(b, kind) in self.tables

    @property
    def block_count(self) -> int:
        return len(self._blocks)

    def has_block(self, b: int) -> bool:
        return b in self._blocks

    def get(self, b: int, kind):
        table = self.tables.get(_key(b, kind))
        if table is None:
            raise BufferMiss(f"block {b} relation {getattr(kind, 'name', kind)} not resident")
        return table

    def resident_blocks(self) -> list:
        with self._lock:
            return list(self._blocks)

    def keys(self) -> list:
        with self._lock:
            return [(b, k) for b, kinds in self._blocks.items() for k in kinds]

    def insert(self, b: int, kind, table):
        """Store ``table``; return the list of evicted blocks, or ``None`` if
        no room could be made (every resident block is exempt)."""
        key = _key(b, kind)
        with self._lock:
            if key in self.tables:
                return []
            evicted = []
            if b not in self._blocks and len(self._blocks) >= self.capacity:
                evicted = self._evict_half()
                if len(self._blocks) >= self.capacity:
                    return None
            self._blocks.setdefault(b, []).append(kind)
            self.tables[key] = table
            self.nbytes += table.nbytes
            if self.nbytes > self.peak_nbytes:
                self.peak_nbytes = self.nbytes
            if len(self._blocks) > self.peak_blocks:
                self.peak_blocks = len(self._blocks)
            return evicted

    def _evict_half(self):
        want = math.ceil(self.capacity / 2)
        skip = self.working_block if self.exempt_working else None
        victims = []
        for blk in self._blocks:
            if len(victims) == want:
                break
            if blk != skip:
                victims.append(blk)
        for blk in victims:
            for kind in self._blocks.pop(blk):
                self.nbytes -= self.tables.pop(_key(blk, kind)).nbytes
        self.evicted_blocks += len(victims)
        if self.batches is not None and victims:
            self.batches.append(victims)
        return victims

    def clear(self):
        with self._lock:
            self._blocks.clear()
            self.tables.clear()
            self.nbytes = 0
