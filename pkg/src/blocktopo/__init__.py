"""Block-decomposed topological relations for tetrahedral meshes, served to
consumer algorithms by producer threads that prefetch ahead of demand."""

from .baselines import OnDemandTopology, StaticTopology, ondemand_request, static_build
from .block_index import BlockIndex, build_block_index, simplices_in_block
from .buffer import Buffer, BufferMiss, default_capacity
from .engine import MODES, ConsumerGroup, EngineConfig, EngineMetrics, run_workload
from .generate import generate_grid_mesh
from .mesh import (Mesh, MeshError, MeshFormatError, SimplexRef, block_of_simplex,
                   dump_mesh, is_internal, load_mesh, make_mesh, read_mesh, validate,
                   write_mesh)
from .partition import (BlockGraph, build_block_graph, default_block_count,
                        partition_by_index, partition_grid)
from .relations import RelationKind, RelationTable, compute_relation, is_boundary_triangle
from .workloads import (CriticalPoints, DiscreteGradient, GradientField, RelationSweep,
                        ScalarField, VPathTraversal, critical_points, discrete_gradient,
                        sweep_all_relations, vpath_traversal)

__version__ = "0.1.0"
