"""Euclidean projection onto the random-utility polytope (masked variant too).

``project`` wraps the interior point solver: build the linear term from the
observed coordinates, solve the reduced QP, reconstruct rho* = B xi* + u and
attach the feasibility certificate values. Unobserved coordinates of the
input are never read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .ipm import IpmOptions, IpmState, solve_qp
from .lattice import LatticeIndexer

D_STAR_FLOOR = 1e-8
D_STAR_CEIL = 1e8
FEAS_TOL = 1e-8


@dataclass
class ProjectionResult:
    """Projected vector, solver certificates and diagnostics."""

    rho_star: np.ndarray
    xi_star: np.ndarray
    distance_sq: float
    lambda_star: np.ndarray
    s_star: np.ndarray
    d_star: np.ndarray
    converged: bool
    ipm_iterations: int
    total_cg_iterations: int
    min_bm_value: float
    max_row_sum_error: float
    primal_residual: float
    dual_residual: float
    mu: float

    def feasible(self, tol: float = FEAS_TOL) -> bool:
        return self.min_bm_value >= -tol and self.max_row_sum_error <= 1e-10


def _certificate(indexer: LatticeIndexer, rho_star: np.ndarray) -> tuple[float, float]:
    bm = ops.apply_K(indexer, rho_star)
    row_sums = np.bincount(
        indexer.pair_subset, weights=rho_star, minlength=indexer.num_vertices
    )[1:]
    return float(np.min(bm)), float(np.max(np.abs(row_sums - 1.0)))


def project(
    indexer: LatticeIndexer,
    rho_hat,
    mask: ops.ObservationMask | None = None,
    opts: IpmOptions | None = None,
    warm: IpmState | None = None,
) -> ProjectionResult:
    """Project rho_hat onto the constraint polytope in the masked L2 metric."""
    mask = mask or ops.full_mask(indexer)
    opts = opts or IpmOptions()
    rho_hat = ops.check_pair_vector(indexer, rho_hat)
    observed = mask.apply(rho_hat)
    if not np.all(np.isfinite(observed)):
        raise ops.OperatorError("input vector has non-finite observed coordinates")

    c_tilde = ops.masked_linear_term(indexer, rho_hat, mask)
    state = solve_qp(indexer, c_tilde, mask, opts, warm=warm)

    rho_star = ops.apply_B(indexer, state.xi) + ops.default_choice_vector(indexer)
    diff = mask.apply(rho_star - observed)
    distance_sq = float(np.dot(diff, diff))
    min_bm, row_err = _certificate(indexer, rho_star)
    with np.errstate(divide="ignore", over="ignore"):
        raw_d = np.where(state.s > 0, state.lam / state.s, D_STAR_CEIL)
    d_star = np.clip(raw_d, D_STAR_FLOOR, D_STAR_CEIL)

    return ProjectionResult(
        rho_star=rho_star,
        xi_star=state.xi,
        distance_sq=distance_sq,
        lambda_star=state.lam,
        s_star=state.s,
        d_star=d_star,
        converged=state.converged,
        ipm_iterations=state.iteration,
        total_cg_iterations=state.total_cg_iters,
        min_bm_value=min_bm,
        max_row_sum_error=row_err,
        primal_residual=state.primal_residual,
        dual_residual=state.dual_residual,
        mu=state.mu,
    )


def project_batch(
    indexer: LatticeIndexer,
    inputs,
    mask: ops.ObservationMask | None = None,
    opts: IpmOptions | None = None,
    n_jobs: int = 1,
) -> list[ProjectionResult]:
    """Independent projections of a batch; order preserving.

    Items never poison each other: a failing item surfaces as a
    non-converged result, not an exception for the whole batch.
    """
    inputs = [np.asarray(v, dtype=np.float64) for v in inputs]

    def run(one: np.ndarray) -> ProjectionResult:
        try:
            return project(indexer, one, mask, opts)
        except RuntimeError:
            zero = np.zeros(indexer.num_pairs)
            return ProjectionResult(
                rho_star=zero,
                xi_star=np.zeros(indexer.num_reduced),
                distance_sq=np.inf,
                lambda_star=zero,
                s_star=zero,
                d_star=np.full(indexer.num_pairs, D_STAR_FLOOR),
                converged=False,
                ipm_iterations=0,
                total_cg_iterations=0,
                min_bm_value=-np.inf,
                max_row_sum_error=np.inf,
                primal_residual=np.inf,
                dual_residual=np.inf,
                mu=np.inf,
            )

    if n_jobs != 1 and len(inputs) > 1:
        from joblib import Parallel, delayed

        return list(
            Parallel(n_jobs=n_jobs, prefer="processes")(
                delayed(run)(one) for one in inputs
            )
        )
    return [run(one) for one in inputs]
