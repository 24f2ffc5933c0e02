"""Projection of choice-probability vectors onto the random-utility polytope.

Matrix-free predictor-corrector interior point solver with a spanning-tree
preconditioner, exact adjoint gradients for use as a differentiable layer,
a boundary-robust bootstrap consistency test, and reproduction harnesses
for the solver experiments.
"""

from .adjoint import BackwardRequest, backward, conflict_measure, run_gradcheck
from .estimator import RumProjection
from .inference import TestConfig, TestReport, bootstrap_test
from .ipm import IpmOptions, IpmState, solve_qp
from .lattice import LatticeIndexer, build_indexer, pair_count, reduced_count
from .operators import ObservationMask, full_mask
from .pcg import SolveReport, pcg_solve
from .preconditioner import SpanningTree, apply_M_inv, build_tree, verify_cotree
from .projection import ProjectionResult, project, project_batch

__version__ = "0.1.0"

__all__ = [
    "BackwardRequest",
    "IpmOptions",
    "IpmState",
    "LatticeIndexer",
    "ObservationMask",
    "ProjectionResult",
    "RumProjection",
    "SolveReport",
    "SpanningTree",
    "TestConfig",
    "TestReport",
    "__version__",
    "apply_M_inv",
    "backward",
    "bootstrap_test",
    "build_indexer",
    "build_tree",
    "conflict_measure",
    "full_mask",
    "pair_count",
    "pcg_solve",
    "project",
    "project_batch",
    "reduced_count",
    "run_gradcheck",
    "solve_qp",
    "verify_cotree",
]
