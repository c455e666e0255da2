"""Multiresolution scattered-data approximation with samplets.

Builds orthogonal samplet bases on arbitrary point clouds, compresses
kernel matrices in samplet coordinates, and solves kernel ridge regression
and l1-regularized basis pursuit problems with FISTA and a semi-smooth
Newton active-set method.
"""

__version__ = "0.1.0"

from .bench import BenchmarkCase, generate, grid_eval, metrics
from .geometry import ClusterTree, PointCloud, bounding_box, build_cluster_tree
from .kernel import Dictionary, KernelSpec, assemble_dense, evaluate
from .operator import (BlockOperator, CompressedOperator, compress,
                       estimate_lipschitz)
from .samplet import (SampletBasis, build_samplet_basis,
                      coefficient_l1_profile, forward_transform,
                      inverse_transform, verify_dual_basis)
from .solver import (SolveReport, SolverConfig, fista, ir_mrssn, mrssn,
                     ridge_cg, soft_shrinkage, solve_multi_kernel)

__all__ = [
    "BenchmarkCase", "BlockOperator", "ClusterTree", "CompressedOperator",
    "Dictionary", "KernelSpec", "PointCloud", "SampletBasis", "SolveReport",
    "SolverConfig", "assemble_dense", "bounding_box", "build_cluster_tree",
    "build_samplet_basis", "coefficient_l1_profile", "compress",
    "estimate_lipschitz", "evaluate", "fista", "forward_transform",
    "generate", "grid_eval", "inverse_transform", "ir_mrssn", "metrics",
    "mrssn", "ridge_cg", "soft_shrinkage", "solve_multi_kernel",
    "verify_dual_basis",
]
