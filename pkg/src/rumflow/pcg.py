"""Preconditioned conjugate gradient over abstract SPD operators.

``apply_A`` and ``apply_Minv`` are callables on reduced vectors; nothing here
knows about the lattice. Inner products are plain sequential numpy dots, so
iteration counts are reproducible. The recursive residual drifts on badly
conditioned systems, so the true residual is recomputed every 50 iterations
and once more before convergence is declared.

CG is the only Krylov method here by design: every consumer eliminates its
equality constraints into a reduced positive-definite system first. Keeping
the constraints explicit would give an indefinite saddle-point system and
call for MINRES, with a similar per-iteration cost but slower convergence;
that route is deliberately not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RECOMPUTE_EVERY = 50


class PcgBreakdownError(RuntimeError):
    """NaN/Inf appeared during the iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class OperatorContractError(RuntimeError):
    """The supplied operator is not symmetric positive definite."""


@dataclass
class SolveReport:
    """Outcome of one PCG solve."""

    solution: np.ndarray
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


def pcg_solve(
    apply_A,
    apply_Minv,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
    stall_window: int | None = None,
) -> SolveReport:
    """Solve A x = rhs with preconditioner M^{-1}, warm started at x0.

    Terminates when ||A x - rhs||_2 <= rel_tol * ||rhs||_2 or max_iter is
    reached; non-convergence is reported, not raised. max_iter defaults to
    10x the problem dimension. With stall_window set, the solve also stops
    (reported as stalled, returning the best iterate seen) when the residual
    has not improved for that many iterations, which happens when rel_tol
    lies below the float64 noise floor of the operator.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    rhs = np.asarray(rhs, dtype=np.float64)
    dim = rhs.shape[0]
    if max_iter is None:
        max_iter = 10 * max(dim, 1)

    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=np.float64)
    if dim == 0:
        return SolveReport(solution=x, iterations=0, residual_history=[0.0], converged=True)

    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        # homogeneous system: the SPD solution is zero
        return SolveReport(
            solution=np.zeros(dim), iterations=0, residual_history=[0.0], converged=True
        )
    threshold = rel_tol * b_norm

    r = rhs - apply_A(x)
    history = [float(np.linalg.norm(r))]
    if history[0] <= threshold:
        return SolveReport(solution=x, iterations=0, residual_history=history, converged=True)

    z = apply_Minv(r)
    p = z.copy()
    rz = float(np.dot(r, z))

    best_res = history[0]
    best_x = x.copy()
    best_k = 0

    k = 0
    while k < max_iter:
        Ap = apply_A(p)
        pAp = float(np.dot(p, Ap))
        if not np.isfinite(pAp):
            raise PcgBreakdownError("non-finite curvature p'Ap", k)
        if pAp <= 0.0:
            raise OperatorContractError(
                f"operator is not positive definite: p'Ap = {pAp:.3e} at iteration {k}"
            )
        alpha = rz / pAp
        x += alpha * p
        k += 1
        if k % RECOMPUTE_EVERY == 0:
            r = rhs - apply_A(x)
        else:
            r -= alpha * Ap
        res = float(np.linalg.norm(r))
        if not np.isfinite(res):
            raise PcgBreakdownError("non-finite residual", k)
        history.append(res)
        if res <= threshold:
            # confirm on the true residual before declaring victory
            r = rhs - apply_A(x)
            res = float(np.linalg.norm(r))
            history[-1] = res
            if res <= threshold:
                return SolveReport(
                    solution=x, iterations=k, residual_history=history, converged=True
                )
        if res < best_res:
            best_res = res
            best_x = x.copy()
            best_k = k
        elif stall_window is not None and k - best_k >= stall_window:
            return SolveReport(
                solution=best_x,
                iterations=k,
                residual_history=history,
                converged=False,
                stalled=True,
            )
        z = apply_Minv(r)
        rz_new = float(np.dot(r, z))
        if not np.isfinite(rz_new):
            raise PcgBreakdownError("non-finite preconditioned residual", k)
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new

    return SolveReport(solution=x, iterations=k, residual_history=history, converged=False)
