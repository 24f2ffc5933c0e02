"""Adjoint gradients through the converged projection.

The projection's implicit Jacobian with respect to its linear parameter is
the inverse of the converged Newton operator, so the backward pass is one
more PCG solve against ``H = Q_mask + (KB)' diag(d*) (KB)`` with
``d* = clamp(lambda*/s*)``. The operator pair is built by the same factory
the forward Newton steps use; only the clamp on d differs.

The default backward tolerance is 1e-6 relative: the d* ceiling of 1e8 puts
kappa(H) near 1e8-1e9, so the float64 residual noise floor sits around 1e-7
relative and tighter requests only stall.

Gradient convention: callers hold the layer input rho_hat, so gradients are
returned with respect to rho_hat. Chaining through rho* = B xi* + u on the
output side and c~ = B' P (rho_hat - u) on the input side gives

    g_rho_hat = P B H^{-1} B' g_rho_star.

At active-set degeneracy the clamped d* selects one element of the
generalized Jacobian; the finite-difference harness below therefore guards
on strict complementarity before asserting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .ipm import IpmOptions, IpmState, make_newton_operator
from .lattice import LatticeIndexer
from .pcg import pcg_solve
from .projection import ProjectionResult, project

BACKWARD_CG_TOL = 1e-6
COMPLEMENTARITY_GUARD = 1e-4


class BackwardSolveError(RuntimeError):
    """Backward CG failed to converge; carries the final residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"backward solve did not converge: residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class BackwardRequest:
    """Converged forward result plus the upstream gradient at rho*."""

    result: ProjectionResult
    grad_rho_star: np.ndarray
    mask: ops.ObservationMask

    def __post_init__(self):
        if not self.result.converged:
            raise ValueError("backward pass requires a converged projection")
        if not np.all(np.isfinite(self.grad_rho_star)):
            raise ValueError("upstream gradient must be finite")


def backward(
    indexer: LatticeIndexer,
    req: BackwardRequest,
    cg_rel_tol: float = BACKWARD_CG_TOL,
) -> np.ndarray:
    """Pull the upstream gradient back to the layer input rho_hat."""
    grad = ops.check_pair_vector(indexer, req.grad_rho_star)
    if indexer.num_reduced == 0:
        return np.zeros(indexer.num_pairs)

    g_xi = ops.apply_B_T(indexer, grad)
    apply_A, apply_Minv, _ = make_newton_operator(
        indexer, req.mask, req.result.d_star
    )
    report = pcg_solve(apply_A, apply_Minv, g_xi, rel_tol=cg_rel_tol, stall_window=60)
    if not report.converged:
        raise BackwardSolveError(report.residual_history[-1], report.iterations)
    return req.mask.apply(ops.apply_B(indexer, report.solution))


def conflict_measure(result: ProjectionResult) -> float:
    """Squared masked distance moved to restore consistency; the monitoring signal."""
    return result.distance_sq


def complementarity_gap(result: ProjectionResult) -> float:
    """min_i max(s_i, lambda_i); small values flag degenerate active sets."""
    return float(np.min(np.maximum(result.s_star, result.lambda_star)))


# ---------------------------------------------------------------------------
# finite-difference harness (shared by tests and the CLI gradcheck command)
# ---------------------------------------------------------------------------


@dataclass
class GradcheckReport:
    seed: int
    resamples: int
    degenerate: bool
    max_rel_error: float
    checked_coords: list[int]
    adjoint: np.ndarray | None = None
    fd: np.ndarray | None = None


def _tight_options() -> IpmOptions:
    # finite differences divide solver bias by h, so drive mu very low;
    # 1e-12 leaves enough termination bias to poison small gradient entries
    return IpmOptions(mu_tol=1e-13, residual_tol=1e-10, cg_floor=1e-13)


def _warm_from(result: ProjectionResult) -> IpmState:
    state = IpmState(
        xi=result.xi_star.copy(),
        s=np.maximum(result.s_star, 1e-6),
        lam=np.maximum(result.lambda_star, 1e-6),
        mu=0.0,
    )
    state.mu = state.duality_measure()
    return state


def run_gradcheck(
    indexer: LatticeIndexer,
    seed: int,
    mask: ops.ObservationMask | None = None,
    step: float = 1e-5,
    num_coords: int | None = None,
    max_resamples: int = 10,
) -> GradcheckReport:
    """Adjoint gradient vs central finite differences on a seeded instance.

    The scalar loss is a seeded random linear functional of the projected
    vector, L = w' P rho*(rho_hat). A generic w overlaps the active face's
    tangent space, so the implicit Jacobian is exercised nontrivially (the
    distance functional itself would not: its upstream gradient is the
    residual, which is normal to the face, and the implicit part vanishes).
    Each finite difference re-solves the QP at rho_hat +- step * e_i, warm
    started from the base solution. Degenerate instances (strict
    complementarity below 1e-4) are resampled with derived seeds; if every
    attempt is degenerate the report says so.
    """
    mask = mask or ops.full_mask(indexer)
    opts = _tight_options()

    for attempt in range(max_resamples):
        rng = np.random.default_rng(seed + 1000 * attempt)
        raw = rng.uniform(size=indexer.num_pairs)
        sums = np.bincount(
            indexer.pair_subset, weights=raw, minlength=indexer.num_vertices
        )
        rho_hat = raw / sums[indexer.pair_subset]
        loss_w = mask.apply(rng.standard_normal(indexer.num_pairs))
        base = project(indexer, rho_hat, mask, opts)
        if not base.converged:
            continue
        if complementarity_gap(base) <= COMPLEMENTARITY_GUARD:
            continue

        adj = backward(indexer, BackwardRequest(base, loss_w, mask))

        observed = np.nonzero(mask.pair_flags)[0]
        if num_coords is not None and num_coords < len(observed):
            coords = rng.choice(observed, size=num_coords, replace=False)
            coords = np.sort(coords)
        else:
            coords = observed

        fd = np.zeros(len(coords))

        def loss_at(vec: np.ndarray) -> float:
            res = project(indexer, vec, mask, opts, warm=_warm_from(base))
            if not res.converged:
                raise BackwardSolveError(res.mu, res.ipm_iterations)
            return float(np.dot(loss_w, res.rho_star))

        for k, i in enumerate(coords):
            bump = np.zeros(indexer.num_pairs)
            bump[i] = step
            fd[k] = (loss_at(rho_hat + bump) - loss_at(rho_hat - bump)) / (2 * step)

        adj_sel = adj[coords]
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(adj_sel)), 1e-6)
        rel = np.abs(adj_sel - fd) / denom
        return GradcheckReport(
            seed=seed,
            resamples=attempt,
            degenerate=False,
            max_rel_error=float(np.max(rel)) if len(rel) else 0.0,
            checked_coords=[int(c) for c in coords],
            adjoint=adj_sel,
            fd=fd,
        )

    return GradcheckReport(
        seed=seed,
        resamples=max_resamples,
        degenerate=True,
        max_rel_error=np.inf,
        checked_coords=[],
    )
