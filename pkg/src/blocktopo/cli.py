"""Command line: ``blocktopo bench ...`` and ``blocktopo generate ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import (PARTITIONERS, STRUCTURES, BenchOptions, VerificationError, format_table,
                    run_bench)
from .engine import MODES
from .generate import generate_grid_mesh, parse_grid_spec
from .mesh import MeshError, write_mesh
from .partition import default_block_count, grid_bins, partition_by_index, partition_grid
from .workloads import WORKLOADS

EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_VERIFY = 4


def _fraction(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("must be a fraction in (0, 1]")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blocktopo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a workload on one structure and report metrics")
    b.add_argument("--mesh", default="gen:20,20,20",
                   help="mesh file, or gen:nx,ny,nz for a synthetic grid")
    b.add_argument("--structure", choices=STRUCTURES, default="actopo")
    b.add_argument("--workload", choices=WORKLOADS, default="relations")
    b.add_argument("--mode", choices=MODES, default="linear-single")
    b.add_argument("--consumers", type=_positive, default=1)
    b.add_argument("--producers", type=_positive, default=1)
    b.add_argument("--blocks", type=_positive, default=None)
    b.add_argument("--partitioner", choices=PARTITIONERS, default="index")
    b.add_argument("--buffer-capacity", type=_fraction, default=0.2,
                   help="buffer size as a fraction of the block count")
    b.add_argument("--field", default=None, help="index, x or random:<seed>")
    b.add_argument("--seed", type=int, default=None,
                   help="seed for the scalars of a generated mesh")
    b.add_argument("--repeat", type=_positive, default=3)
    b.add_argument("--verify", action="store_true",
                   help="check every relation row and the checksum against a static oracle")
    b.add_argument("--out", default=None, help="append JSON records to this file")

    g = sub.add_parser("generate", help="write a synthetic tetrahedral grid")
    g.add_argument("size", help="nx,ny,nz")
    g.add_argument("output")
    g.add_argument("--seed", type=int, default=None, help="add a random scalar section")
    g.add_argument("--blocks", type=_positive, default=None, help="add a blocks section")
    g.add_argument("--partitioner", choices=PARTITIONERS, default="index")
    return parser


def _bench(args) -> int:
    opts = BenchOptions(mesh=args.mesh, structure=args.structure, workload=args.workload,
                        mode=args.mode, consumers=args.consumers, producers=args.producers,
                        blocks=args.blocks, partitioner=args.partitioner,
                        buffer_capacity=args.buffer_capacity, field=args.field,
                        repeat=args.repeat, verify=args.verify, seed=args.seed)
    try:
        runs, summary = run_bench(opts)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    records = [r.to_json() for r in runs + [summary]]
    if args.out:
        with open(args.out, "a") as fh:
            fh.write("\n".join(records) + "\n")
    else:
        print("\n".join(records))
    print(format_table(runs + [summary]), file=sys.stderr if not args.out else sys.stdout)
    return 0


def _generate(args) -> int:
    mesh = generate_grid_mesh(*parse_grid_spec(args.size), seed=args.seed)
    if args.blocks:
        n = min(args.blocks, mesh.n_vertices)
        if args.partitioner == "grid":
            mesh = partition_grid(mesh, grid_bins(n))
        else:
            mesh = mesh.with_blocks(partition_by_index(mesh, n))
    write_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_vertices} vertices, {mesh.n_tets} tetrahedra"
          + (f", {mesh.n_blocks} blocks" if mesh.block_of is not None else "")
          + f" (default block count {default_block_count(mesh.n_vertices)})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "bench":
            return _bench(args)
        return _generate(args)
    except (MeshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
