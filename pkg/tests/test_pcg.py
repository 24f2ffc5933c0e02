import numpy as np
import pytest

from rumflow.pcg import (
    OperatorContractError,
    PcgBreakdownError,
    SolveReport,
    pcg_solve,
)


def dense_ops(A, Minv=None):
    apply_A = lambda v: A @ v
    if Minv is None:
        apply_Minv = lambda v: v
    else:
        apply_Minv = lambda v: Minv @ v
    return apply_A, apply_Minv


def spd_matrix(rng, dim, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.geomspace(1.0, cond, dim)
    return Q @ np.diag(eig) @ Q.T


def test_identity_converges_in_one_iteration():
    rng = np.random.default_rng(0)
    b = rng.standard_normal(20)
    rep = pcg_solve(*dense_ops(np.eye(20)), b, rel_tol=1e-12)
    assert rep.converged
    assert rep.iterations == 1
    np.testing.assert_allclose(rep.solution, b, atol=1e-12)


def test_warm_start_at_solution_takes_zero_iterations():
    rng = np.random.default_rng(1)
    A = spd_matrix(rng, 15)
    x_true = rng.standard_normal(15)
    b = A @ x_true
    rep = pcg_solve(*dense_ops(A), b, x0=x_true, rel_tol=1e-10)
    assert rep.converged
    assert rep.iterations == 0
    assert len(rep.residual_history) == 1


def test_outlier_spectrum_finite_termination():
    # eigenvalues {1} * (dim - r) plus r distinct outliers: <= r+1 (+5 slack)
    rng = np.random.default_rng(2)
    dim, r = 60, 6
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.concatenate([np.ones(dim - r), np.geomspace(3.0, 300.0, r)])
    A = Q @ np.diag(eig) @ Q.T
    b = rng.standard_normal(dim)
    rep = pcg_solve(*dense_ops(A), b, rel_tol=1e-10)
    assert rep.converged
    assert rep.iterations <= r + 1 + 5


def test_residual_history_length_matches_iterations():
    rng = np.random.default_rng(3)
    A = spd_matrix(rng, 25, cond=50)
    b = rng.standard_normal(25)
    rep = pcg_solve(*dense_ops(A), b, rel_tol=1e-8)
    assert rep.converged
    assert len(rep.residual_history) == rep.iterations + 1
    assert rep.residual_history[-1] <= 1e-8 * np.linalg.norm(b)


def test_monotone_A_norm_error_decrease():
    rng = np.random.default_rng(4)
    for dim in (5, 9, 14):
        A = spd_matrix(rng, dim, cond=1e4)
        b = rng.standard_normal(dim)
        x_true = np.linalg.solve(A, b)
        errors = []
        for cap in range(0, dim + 1):
            rep = pcg_solve(*dense_ops(A), b, rel_tol=1e-15, max_iter=max(cap, 1))
            if cap == 0:
                continue
            e = rep.solution - x_true
            errors.append(float(e @ A @ e))
        assert all(b <= a * (1 + 1e-9) for a, b in zip(errors, errors[1:]))


def test_preconditioner_equivalence_on_final_solution():
    rng = np.random.default_rng(5)
    A = spd_matrix(rng, 30, cond=1e4)
    Minv = np.diag(1.0 / np.diag(A))
    b = rng.standard_normal(30)
    plain = pcg_solve(*dense_ops(A), b, rel_tol=1e-10, max_iter=5000)
    precond = pcg_solve(*dense_ops(A, Minv), b, rel_tol=1e-10, max_iter=5000)
    assert plain.converged and precond.converged
    delta = np.linalg.norm(plain.solution - precond.solution)
    assert delta <= 1e-8 * max(1.0, np.linalg.norm(plain.solution))


def test_non_spd_operator_detected():
    A = np.diag([1.0, -1.0, 2.0])
    b = np.array([1.0, 1.0, 1.0])
    with pytest.raises(OperatorContractError):
        pcg_solve(*dense_ops(A), b, rel_tol=1e-10)


def test_nan_breakdown_reports_iteration():
    def bad_A(v):
        out = v.copy()
        out[0] = np.nan
        return out

    with pytest.raises(PcgBreakdownError) as err:
        pcg_solve(bad_A, lambda v: v, np.ones(4), rel_tol=1e-10)
    assert err.value.iteration == 0


def test_zero_rhs_and_empty_dimension():
    rep = pcg_solve(lambda v: v, lambda v: v, np.zeros(7))
    assert rep.converged and rep.iterations == 0
    np.testing.assert_array_equal(rep.solution, np.zeros(7))
    rep0 = pcg_solve(lambda v: v, lambda v: v, np.zeros(0))
    assert rep0.converged
    assert rep0.solution.shape == (0,)


def test_non_convergence_reported_not_raised():
    rng = np.random.default_rng(6)
    A = spd_matrix(rng, 40, cond=1e8)
    b = rng.standard_normal(40)
    rep = pcg_solve(*dense_ops(A), b, rel_tol=1e-14, max_iter=3)
    assert not rep.converged
    assert rep.iterations == 3
    assert isinstance(rep, SolveReport)


def test_matches_dense_solve():
    rng = np.random.default_rng(7)
    for dim in (4, 8, 16):
        A = spd_matrix(rng, dim, cond=1e3)
        b = rng.standard_normal(dim)
        rep = pcg_solve(*dense_ops(A), b, rel_tol=1e-13, max_iter=10 * dim)
        np.testing.assert_allclose(rep.solution, np.linalg.solve(A, b), atol=1e-9)
