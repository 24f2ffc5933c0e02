"""Predictor-corrector interior point method for the reduced projection QP.

Solves ``min 0.5 xi' Q xi - c~' xi  s.t.  KB xi + b >= 0`` with slacks s and
duals lambda. Each outer iteration takes an affine (predictor) step and a
centering-corrector step; both Newton systems share the same coefficient
operator ``H = Q + (KB)' S^{-1} Lambda (KB)`` and are solved by PCG under the
spanning-tree preconditioner, after eliminating the slack and dual rows:

    H dxi = b1 + (KB)' S^{-1} (b3 + Lambda b2)
    ds    = KB dxi - b2
    dlam  = S^{-1} (b3 - Lambda ds)

The tree is rebuilt lazily: only when the barrier diagonal drifts by more
than a decade in log10 since the last build, or when the inner CG iteration
count blows up. Inner solves warm start from the previous direction
(predictor) and from the affine direction (corrector).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from . import preconditioner as pc
from .lattice import LatticeIndexer
from .pcg import SolveReport, pcg_solve

logger = logging.getLogger(__name__)

_STALL_ALPHA = 1e-8
_STALL_LIMIT = 3


class IpmStallError(RuntimeError):
    """Step lengths collapsed repeatedly; the iterate cannot move."""


@dataclass(frozen=True)
class IpmOptions:
    """Solver knobs; defaults follow the projection contract."""

    tau: float = 0.995
    mu_tol: float = 1e-9
    residual_tol: float = 1e-8
    max_iter: int = 100
    cg_rel_tol_factor: float = 0.1
    cg_floor: float = 1e-12
    cg_max_iter: int | None = None
    rebuild_log10_threshold: float = 1.0
    rebuild_cg_iter_threshold: int = 200

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        for name in ("mu_tol", "residual_tol", "cg_floor", "cg_rel_tol_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class IpmState:
    """Primal-dual iterate plus preconditioner bookkeeping."""

    xi: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    mu: float
    iteration: int = 0
    tree: pc.SpanningTree | None = None
    d_at_build: np.ndarray | None = None
    last_cg_iters: int = 0
    total_cg_iters: int = 0
    converged: bool = False
    primal_residual: float = np.inf
    dual_residual: float = np.inf

    def duality_measure(self) -> float:
        n = len(self.s)
        return float(np.dot(self.s, self.lam) / n) if n else 0.0


def make_newton_operator(
    indexer: LatticeIndexer,
    mask: ops.ObservationMask,
    d: np.ndarray,
    tree: pc.SpanningTree | None = None,
):
    """Shared operator pair for Newton steps and the adjoint backward solve.

    Returns (apply_A, apply_Minv, tree) with A = Q_mask + (KB)' diag(d) (KB)
    and M^{-1} the spanning-tree preconditioner built from the same d.
    """
    if tree is None:
        tree = pc.build_tree(indexer, d)
    apply_A = lambda xi: ops.apply_H(indexer, xi, d, mask)
    apply_Minv = lambda v: pc.apply_M_inv(tree, d, v)
    return apply_A, apply_Minv, tree


def initialize_state(indexer: LatticeIndexer, mask: ops.ObservationMask) -> IpmState:
    """Interior start at the uniform choice vector.

    xi0 = R(rho_int - u) makes B xi0 + u the uniform vector, whose transform
    is strictly positive; slacks are clamped below at 1e-2 because those
    values shrink with n, and the infeasible-start primal residual absorbs
    the clamp gap.
    """
    rho_int = ops.uniform_choice_vector(indexer)
    u = ops.default_choice_vector(indexer)
    xi = ops.apply_R(indexer, rho_int - u)
    s = np.maximum(
        ops.apply_KB(indexer, xi) + ops.default_flow_vector(indexer), 1e-2
    )
    lam = np.ones(indexer.num_pairs)
    state = IpmState(xi=xi, s=s, lam=lam, mu=0.0)
    state.mu = state.duality_measure()
    return state


def _ratio_to_boundary(vec: np.ndarray, step: np.ndarray) -> float:
    """max alpha with vec + alpha*step >= 0, capped at 1."""
    neg = step < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(vec[neg] / -step[neg])))


_CG_STALL_WINDOW = 40


def newton_reduce(
    indexer: LatticeIndexer,
    mask: ops.ObservationMask,
    state: IpmState,
    b1: np.ndarray,
    b2: np.ndarray,
    b3: np.ndarray,
    cg_rel_tol: float,
    cg_max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, SolveReport]:
    """Solve one 3x3 Newton block system through its Schur reduction."""
    d = state.lam / state.s
    apply_A, apply_Minv, _ = make_newton_operator(indexer, mask, d, state.tree)
    rhs = b1 + ops.apply_KB_T(indexer, (b3 + state.lam * b2) / state.s)
    report = pcg_solve(
        apply_A,
        apply_Minv,
        rhs,
        x0=x0,
        rel_tol=cg_rel_tol,
        max_iter=cg_max_iter,
        stall_window=_CG_STALL_WINDOW,
    )
    dxi = report.solution
    ds = ops.apply_KB(indexer, dxi) - b2
    dlam = (b3 - state.lam * ds) / state.s
    return dxi, ds, dlam, report


def _terminated(
    state: IpmState, mu0: float, c_norm: float, opts: IpmOptions
) -> bool:
    return (
        state.mu <= opts.mu_tol * max(1.0, mu0)
        and state.primal_residual <= opts.residual_tol
        and state.dual_residual <= opts.residual_tol * (1.0 + c_norm)
    )


def solve_qp(
    indexer: LatticeIndexer,
    c_tilde: np.ndarray,
    mask: ops.ObservationMask,
    opts: IpmOptions | None = None,
    warm: IpmState | None = None,
) -> IpmState:
    """Run the predictor-corrector loop to convergence or max_iter.

    Returns the final state; state.converged is False when max_iter ran out
    (never a silent wrong answer). Raises IpmStallError when the step length
    collapses repeatedly.
    """
    opts = opts or IpmOptions()
    c_tilde = ops.check_reduced_vector(indexer, c_tilde)

    if indexer.num_reduced == 0:
        # one alternative: the feasible set is the single point xi = ()
        state = IpmState(
            xi=np.zeros(0),
            s=ops.default_flow_vector(indexer),
            lam=np.zeros(indexer.num_pairs),
            mu=0.0,
            converged=True,
        )
        state.primal_residual = 0.0
        state.dual_residual = 0.0
        return state

    b = ops.default_flow_vector(indexer)
    n_pairs = indexer.num_pairs
    c_norm = float(np.max(np.abs(c_tilde))) if len(c_tilde) else 0.0

    if warm is not None:
        state = IpmState(
            xi=warm.xi.copy(),
            s=np.maximum(warm.s, 1e-10),
            lam=np.maximum(warm.lam, 1e-10),
            mu=0.0,
            tree=warm.tree,
            d_at_build=None if warm.d_at_build is None else warm.d_at_build.copy(),
        )
        state.mu = state.duality_measure()
    else:
        state = initialize_state(indexer, mask)
    mu0 = max(state.mu, np.finfo(float).tiny)

    prev_dxi: np.ndarray | None = None
    stall_count = 0

    def residuals(st: IpmState) -> tuple[float, float]:
        r_primal = ops.apply_KB(indexer, st.xi) + b - st.s
        r_dual = (
            ops.apply_Q(indexer, mask, st.xi)
            - c_tilde
            - ops.apply_KB_T(indexer, st.lam)
        )
        return float(np.max(np.abs(r_primal))), float(np.max(np.abs(r_dual)))

    state.primal_residual, state.dual_residual = residuals(state)

    for _ in range(opts.max_iter):
        if _terminated(state, mu0, c_norm, opts):
            state.converged = True
            return state

        d = state.lam / state.s
        if state.tree is None or _needs_rebuild(state, d, opts):
            state.tree = pc.build_tree(indexer, d)
            state.d_at_build = d.copy()

        cg_tol = float(
            np.clip(
                opts.cg_rel_tol_factor * min(1.0, state.mu / mu0),
                opts.cg_floor,
                1e-2,
            )
        )

        # predictor (affine scaling) step
        b1 = (
            -ops.apply_Q(indexer, mask, state.xi)
            + ops.apply_KB_T(indexer, state.lam)
            + c_tilde
        )
        b2 = -ops.apply_KB(indexer, state.xi) + state.s - b
        b3_aff = -state.lam * state.s
        dxi_a, ds_a, dlam_a, rep_a = _solve_with_rebuild(
            indexer, mask, state, b1, b2, b3_aff, cg_tol, opts, x0=prev_dxi
        )

        mu = state.duality_measure()
        alpha_aff = min(
            _ratio_to_boundary(state.s, ds_a), _ratio_to_boundary(state.lam, dlam_a)
        )
        mu_aff = float(
            np.dot(state.s + alpha_aff * ds_a, state.lam + alpha_aff * dlam_a)
            / n_pairs
        )
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # centering corrector
        b3 = -state.lam * state.s - dlam_a * ds_a + sigma * mu
        dxi, ds, dlam, rep_c = _solve_with_rebuild(
            indexer, mask, state, b1, b2, b3, cg_tol, opts, x0=dxi_a
        )
        state.last_cg_iters = rep_a.iterations + rep_c.iterations
        state.total_cg_iters += state.last_cg_iters

        # fraction-to-boundary: keep (s, lam) >= (1 - tau) of current values
        alpha = min(
            1.0,
            opts.tau * _ratio_to_boundary(state.s, ds),
            opts.tau * _ratio_to_boundary(state.lam, dlam),
        )

        if alpha < _STALL_ALPHA:
            stall_count += 1
            if stall_count >= _STALL_LIMIT:
                raise IpmStallError(
                    f"step length collapsed {stall_count} times in a row "
                    f"(mu={state.mu:.3e}, iteration {state.iteration})"
                )
        else:
            stall_count = 0

        state.xi = state.xi + alpha * dxi
        state.s = state.s + alpha * ds
        state.lam = state.lam + alpha * dlam
        prev_mu = state.mu
        state.mu = state.duality_measure()
        state.iteration += 1
        prev_dxi = dxi

        state.primal_residual, state.dual_residual = residuals(state)
        logger.debug(
            "ipm iter=%d mu=%.3e alpha=%.3f sigma=%.2e cg=%d r_p=%.2e r_d=%.2e",
            state.iteration,
            state.mu,
            alpha,
            sigma,
            state.last_cg_iters,
            state.primal_residual,
            state.dual_residual,
        )
        if state.mu > prev_mu * 10 and state.iteration > 3:
            logger.debug("duality measure increased tenfold at iter %d", state.iteration)

    state.converged = _terminated(state, mu0, c_norm, opts)
    return state


def _needs_rebuild(state: IpmState, d: np.ndarray, opts: IpmOptions) -> bool:
    if state.d_at_build is None:
        return True
    if state.last_cg_iters > opts.rebuild_cg_iter_threshold:
        return True
    drift = np.max(np.abs(np.log10(d) - np.log10(state.d_at_build)))
    return bool(drift > opts.rebuild_log10_threshold)


def _solve_with_rebuild(
    indexer, mask, state, b1, b2, b3, cg_tol, opts: IpmOptions, x0=None
):
    """One reduced Newton solve; on CG non-convergence rebuild the tree and retry.

    The retry only happens when the tree is actually stale: a stalled solve
    under a fresh tree has hit the float64 noise floor, and its best iterate
    is the most accurate direction available.
    """
    dxi, ds, dlam, report = newton_reduce(
        indexer, mask, state, b1, b2, b3, cg_tol, opts.cg_max_iter, x0=x0
    )
    if not report.converged:
        d = state.lam / state.s
        if _needs_rebuild(state, d, opts):
            logger.debug(
                "inner CG stopped at %d iterations without converging; rebuilding tree",
                report.iterations,
            )
            state.tree = pc.build_tree(indexer, d)
            state.d_at_build = d.copy()
            dxi, ds, dlam, report = newton_reduce(
                indexer, mask, state, b1, b2, b3, cg_tol, opts.cg_max_iter, x0=dxi
            )
    return dxi, ds, dlam, report
