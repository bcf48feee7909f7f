"""Benchmark harness: one configured run of a workload on one structure,
repeated, with phase timings and instrumented memory."""

from __future__ import annotations

import dataclasses
import json
import statistics
import time
from dataclasses import dataclass

from .baselines import OnDemandTopology, StaticTopology
from .block_index import build_block_index
from .buffer import default_capacity
from .engine import MODES, EngineConfig, run_workload
from .generate import generate_grid_mesh, parse_grid_spec
from .mesh import read_mesh
from .partition import (build_block_graph, default_block_count, grid_bins,
                        partition_by_index, partition_grid)
from .workloads import (WORKLOADS, DiscreteGradient, ScalarField, TopologyAccess,
                        make_workload, run_consumers)

__all__ = ["BenchOptions", "BenchReport", "VerificationError", "load_input", "run_bench",
           "format_table"]

STRUCTURES = ("actopo", "static", "ondemand")
PARTITIONERS = ("index", "grid")


class VerificationError(RuntimeError):
    """A relation row or a workload checksum disagreed with the static oracle."""


@dataclass
class BenchOptions:
    mesh: str = "gen:20,20,20"
    structure: str = "actopo"
    workload: str = "relations"
    mode: str = "linear-single"
    consumers: int = 1
    producers: int = 1
    blocks: int | None = None
    partitioner: str = "index"
    buffer_capacity: float = 0.2
    field: str | None = None
    repeat: int = 3
    verify: bool = False
    seed: int | None = None

    def check(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.workload not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.partitioner not in PARTITIONERS:
            raise ValueError(f"unknown partitioner {self.partitioner!r}")
        if self.consumers < 1 or self.producers < 1:
            raise ValueError("--consumers and --producers must be at least 1")
        if not 0 < self.buffer_capacity <= 1:
            raise ValueError("--buffer-capacity is a fraction of the block count in (0, 1]")
        if self.repeat < 1:
            raise ValueError("--repeat must be at least 1")
        if self.blocks is not None and self.blocks < 1:
            raise ValueError("--blocks must be at least 1")


@dataclass
class BenchReport:
    structure: str
    workload: str
    mode: str
    consumers: int
    producers: int
    buffer_fraction: float
    buffer_capacity: int
    n_blocks: int
    n_vertices: int
    n_tets: int
    preprocess_time: float
    execute_time: float
    wait_time: float
    wait_time_per_consumer: list
    execute_time_per_consumer: list
    computations: dict
    requests: int
    misses: int
    evictions: int
    peak_resident_blocks: int
    peak_memory_bytes: int
    index_bytes: int
    checksum: str
    rss_bytes: int | None = None
    run: int | str = 0
    verified: bool = False

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def load_input(spec: str, seed=None):
    """``gen:nx,ny,nz`` synthesizes a grid, anything else is a mesh file."""
    if spec.startswith("gen:"):
        return generate_grid_mesh(*parse_grid_spec(spec[4:]), seed=seed)
    return read_mesh(spec)


def _partition(mesh, opts):
    if opts.blocks is None and mesh.block_of is not None:
        return mesh
    n = opts.blocks or default_block_count(mesh.n_vertices)
    n = min(n, mesh.n_vertices)
    if opts.partitioner == "grid":
        return partition_grid(mesh, grid_bins(n))
    return mesh.with_blocks(partition_by_index(mesh, n))


def _field(mesh, spec):
    if spec is None:
        spec = "file" if mesh.scalars is not None else "index"
    return ScalarField.from_spec(spec, mesh)


def _rss():
    try:
        import resource
    except ImportError:  # not on every platform
        return None
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


class VerifyingAccess(TopologyAccess):
    """Pass-through access that compares every row with the oracle."""

    def __init__(self, inner, oracle):
        super().__init__(inner.index)
        self.inner = inner
        self.oracle = oracle
        self.checked = 0

    def request(self, kind, sid):
        return self.inner.request(kind, sid)

    def row(self, kind, sid):
        got = self.inner.row(kind, sid)
        want = self.oracle.row(kind, sid)
        if got != want:
            raise VerificationError(
                f"relation {kind.name} of simplex {sid}: got {got}, oracle says {want}")
        self.checked += 1
        return got


def _one_run(mesh, opts, run_no, oracle_cache):
    t0 = time.perf_counter()
    mesh = _partition(mesh, opts)
    index = build_block_index(mesh)
    nb = index.n_blocks
    cap = default_capacity(nb, opts.buffer_capacity)
    field_ = _field(mesh, opts.field)
    gradient = None
    if opts.workload == "vpath":
        # the gradient is input to the traversal, not part of it
        helper = OnDemandTopology(mesh, index, nb)
        gradient = run_consumers([helper], DiscreteGradient(field_))[0]
    workload = make_workload(opts.workload, field_, gradient)
    kinds = workload.required_kinds

    oracle = None
    if opts.verify:
        oracle = oracle_cache.get("oracle")
        if oracle is None:
            oracle = oracle_cache["oracle"] = StaticTopology(mesh, index)

    def wrap(acc):
        return acc if oracle is None else VerifyingAccess(acc, oracle)

    comps = {"leader": 0, "worker": 0, "consumer": 0, "preprocess": 0}
    requests = misses = evictions = peak_blocks = 0
    wait = [0.0] * opts.consumers
    if opts.structure == "static":
        topo = StaticTopology(mesh, index, kinds)
        comps["preprocess"] = topo.computations
        graph = None
        preprocess = time.perf_counter() - t0
        t1 = time.perf_counter()
        output, times = run_consumers([wrap(topo)] * opts.consumers, workload)
        execute = time.perf_counter() - t1
        peak_bytes = topo.nbytes
        peak_blocks = nb
    elif opts.structure == "ondemand":
        tops = [OnDemandTopology(mesh, index, cap) for _ in range(opts.consumers)]
        preprocess = time.perf_counter() - t0
        t1 = time.perf_counter()
        output, times = run_consumers([wrap(t) for t in tops], workload)
        execute = time.perf_counter() - t1
        comps["consumer"] = sum(t.computations for t in tops)
        requests = sum(t.requests for t in tops)
        misses = comps["consumer"]
        evictions = sum(t.buffer.evicted_blocks for t in tops)
        peak_blocks = max(t.buffer.peak_blocks for t in tops)
        peak_bytes = index.nbytes + sum(t.buffer.peak_nbytes for t in tops)
    else:
        config = EngineConfig.from_mode(opts.mode, opts.producers, required_kinds=kinds,
                                        consumers=opts.consumers, buffer_capacity=cap)
        graph = build_block_graph(mesh) if config.direction == "spatial" else None
        preprocess = time.perf_counter() - t0
        t1 = time.perf_counter()
        output, metrics = run_workload(mesh, index, config, workload, graph=graph, wrap=wrap)
        execute = time.perf_counter() - t1
        times = metrics.execute_time
        wait = metrics.wait_time
        comps.update(metrics.computations)
        requests, misses = metrics.requests, metrics.misses
        evictions = metrics.evictions
        peak_blocks = metrics.peak_resident_blocks
        peak_bytes = index.nbytes + metrics.peak_buffer_bytes

    checksum = workload.checksum(output)
    if oracle is not None:
        want = oracle_cache.get("checksum")
        if want is None:
            want = oracle_cache["checksum"] = workload.checksum(
                run_consumers([oracle], workload)[0])
        if checksum != want:
            raise VerificationError(
                f"checksum {checksum:016x} differs from the static oracle's {want:016x}")

    return BenchReport(
        structure=opts.structure, workload=opts.workload, mode=opts.mode,
        consumers=opts.consumers, producers=opts.producers,
        buffer_fraction=opts.buffer_capacity, buffer_capacity=cap, n_blocks=nb,
        n_vertices=mesh.n_vertices, n_tets=mesh.n_tets,
        preprocess_time=preprocess, execute_time=execute, wait_time=sum(wait),
        wait_time_per_consumer=list(wait), execute_time_per_consumer=list(times),
        computations=comps, requests=requests, misses=misses, evictions=evictions,
        peak_resident_blocks=peak_blocks, peak_memory_bytes=peak_bytes,
        index_bytes=index.nbytes, checksum=f"{checksum:016x}", rss_bytes=_rss(),
        run=run_no, verified=oracle is not None)


_MEDIAN_FIELDS = ("preprocess_time", "execute_time", "wait_time", "peak_memory_bytes")


def run_bench(opts: BenchOptions, mesh=None):
    """Execute ``opts.repeat`` runs; return ``(runs, summary)``.

    The summary carries medians of the timing and memory fields.  Runs that
    disagree on the checksum raise ``VerificationError``.
    """
    opts.check()
    if mesh is None:
        mesh = load_input(opts.mesh, opts.seed)
    cache = {}
    runs = [_one_run(mesh, opts, i, cache) for i in range(opts.repeat)]
    sums = {r.checksum for r in runs}
    if len(sums) != 1:
        raise VerificationError(f"checksum changed between repeats: {sorted(sums)}")
    summary = dataclasses.replace(runs[0], run="median")
    for name in _MEDIAN_FIELDS:
        setattr(summary, name, statistics.median(getattr(r, name) for r in runs))
    summary.peak_memory_bytes = int(summary.peak_memory_bytes)
    summary.wait_time_per_consumer = [statistics.median(col) for col in
                                      zip(*(r.wait_time_per_consumer for r in runs))]
    summary.execute_time_per_consumer = [statistics.median(col) for col in
                                         zip(*(r.execute_time_per_consumer for r in runs))]
    return runs, summary


def format_table(reports) -> str:
    cols = [("run", "{}"), ("structure", "{}"), ("mode", "{}"), ("consumers", "{}"),
            ("producers", "{}"), ("preprocess_time", "{:.3f}"), ("execute_time", "{:.3f}"),
            ("wait_time", "{:.3f}"), ("misses", "{}"), ("evictions", "{}"),
            ("peak_resident_blocks", "{}"), ("peak_memory_bytes", "{}"), ("checksum", "{}")]
    head = ["run", "structure", "mode", "t_c", "t_pc", "prep s", "exec s", "wait s",
            "misses", "evict", "peak blk", "peak bytes", "checksum"]
    rows = [head] + [[fmt.format(getattr(r, name)) for name, fmt in cols] for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
