import numpy as np
import pytest

import rumflow.operators as ops
from rumflow.lattice import build_indexer

from oracles import dense_B, dense_K, dense_K_inv, row_normalized_random


@pytest.fixture(scope="module")
def idx4():
    return build_indexer(4)


# ---- K family against dense assembly ----


@pytest.mark.parametrize("n", range(1, 6))
def test_K_matches_dense_definition(n):
    idx = build_indexer(n)
    K = dense_K(idx)
    rng = np.random.default_rng(7 + n)
    v = rng.standard_normal(idx.num_pairs)
    np.testing.assert_allclose(ops.apply_K(idx, v), K @ v, atol=1e-12)
    np.testing.assert_allclose(ops.apply_K_T(idx, v), K.T @ v, atol=1e-12)


@pytest.mark.parametrize("n", range(1, 6))
def test_K_inv_matches_dense_definition(n):
    idx = build_indexer(n)
    Z = dense_K_inv(idx)
    rng = np.random.default_rng(11 + n)
    v = rng.standard_normal(idx.num_pairs)
    np.testing.assert_allclose(ops.apply_K_inv(idx, v), Z @ v, atol=1e-12)
    np.testing.assert_allclose(ops.apply_K_inv_T(idx, v), Z.T @ v, atol=1e-12)


def test_K_n1_is_identity():
    idx = build_indexer(1)
    v = np.array([0.73])
    np.testing.assert_array_equal(ops.apply_K(idx, v), v)


def test_K_uniform_n2_by_hand():
    idx = build_indexer(2)
    kappa = ops.apply_K(idx, ops.uniform_choice_vector(idx))
    assert kappa[idx.pair_to_dense(0b11, 0)] == pytest.approx(0.5)
    assert kappa[idx.pair_to_dense(0b11, 1)] == pytest.approx(0.5)
    assert kappa[idx.pair_to_dense(0b01, 0)] == pytest.approx(0.5)
    assert kappa[idx.pair_to_dense(0b10, 1)] == pytest.approx(0.5)


def test_K_inv_unit_mass_n2_by_hand():
    idx = build_indexer(2)
    kappa = np.zeros(idx.num_pairs)
    kappa[idx.pair_to_dense(0b11, 0)] = 1.0
    rho = ops.apply_K_inv(idx, kappa)
    expected = np.zeros(idx.num_pairs)
    expected[idx.pair_to_dense(0b11, 0)] = 1.0
    expected[idx.pair_to_dense(0b01, 0)] = 1.0
    np.testing.assert_allclose(rho, expected, atol=1e-15)


@pytest.mark.parametrize("n", range(1, 9))
def test_K_and_K_inv_are_mutually_inverse(n):
    idx = build_indexer(n)
    rng = np.random.default_rng(n)
    rho = rng.standard_normal(idx.num_pairs)
    back = ops.apply_K_inv(idx, ops.apply_K(idx, rho))
    assert np.max(np.abs(back - rho)) < 1e-12
    fwd = ops.apply_K(idx, ops.apply_K_inv(idx, rho))
    assert np.max(np.abs(fwd - rho)) < 1e-12


@pytest.mark.parametrize("n", range(2, 6))
def test_K_of_u_equals_b(n):
    idx = build_indexer(n)
    u = ops.default_choice_vector(idx)
    b = ops.default_flow_vector(idx)
    np.testing.assert_allclose(ops.apply_K(idx, u), b, atol=1e-12)
    np.testing.assert_allclose(ops.apply_K_inv(idx, b), u, atol=1e-12)


# ---- B family ----


@pytest.mark.parametrize("n", range(1, 6))
def test_B_matches_dense_definition(n):
    idx = build_indexer(n)
    B = dense_B(idx)
    rng = np.random.default_rng(n * 3 + 1)
    xi = rng.standard_normal(idx.num_reduced)
    rho = rng.standard_normal(idx.num_pairs)
    np.testing.assert_allclose(ops.apply_B(idx, xi), B @ xi, atol=1e-12)
    np.testing.assert_allclose(ops.apply_B_T(idx, rho), B.T @ rho, atol=1e-12)


def test_B_T_of_u_is_minus_ones(idx4):
    u = ops.default_choice_vector(idx4)
    np.testing.assert_array_equal(ops.apply_B_T(idx4, u), -np.ones(idx4.num_reduced))


def test_B_block_sums_vanish(idx4):
    rng = np.random.default_rng(5)
    xi = rng.standard_normal(idx4.num_reduced)
    out = ops.apply_B(idx4, xi)
    sums = np.bincount(idx4.pair_subset, weights=out, minlength=idx4.num_vertices)
    assert np.max(np.abs(sums)) < 1e-12


def test_R_of_B_is_identity(idx4):
    rng = np.random.default_rng(6)
    xi = rng.standard_normal(idx4.num_reduced)
    np.testing.assert_array_equal(ops.apply_R(idx4, ops.apply_B(idx4, xi)), xi)


@pytest.mark.parametrize("n", range(2, 9))
def test_adjoint_identities(n):
    idx = build_indexer(n)
    rng = np.random.default_rng(100 + n)
    pairs = [
        (lambda v: ops.apply_K(idx, v), lambda v: ops.apply_K_T(idx, v), idx.num_pairs, idx.num_pairs),
        (lambda v: ops.apply_K_inv(idx, v), lambda v: ops.apply_K_inv_T(idx, v), idx.num_pairs, idx.num_pairs),
        (lambda v: ops.apply_B(idx, v), lambda v: ops.apply_B_T(idx, v), idx.num_reduced, idx.num_pairs),
        (lambda v: ops.apply_R(idx, v), lambda v: ops.apply_R_T(idx, v), idx.num_pairs, idx.num_reduced),
        (lambda v: ops.apply_KB(idx, v), lambda v: ops.apply_KB_T(idx, v), idx.num_reduced, idx.num_pairs),
    ]
    for fwd, adj, din, dout in pairs:
        x = rng.standard_normal(din)
        y = rng.standard_normal(dout)
        lhs = np.dot(fwd(x), y)
        rhs = np.dot(x, adj(y))
        scale = max(1.0, abs(lhs))
        assert abs(lhs - rhs) / scale < 1e-12


# ---- flow theorems ----


@pytest.mark.parametrize("n", range(2, 9))
def test_row_normalized_vectors_map_to_unit_flows(n):
    idx = build_indexer(n)
    rng = np.random.default_rng(17 + n)
    rho = row_normalized_random(idx, rng)
    kappa = ops.apply_K(idx, rho)
    imbalance = ops.vertex_imbalance(idx, kappa)
    assert abs(ops.total_flow(idx, kappa) - 1.0) < 1e-12
    internal = np.ones(idx.num_vertices, dtype=bool)
    internal[[0, idx.num_vertices - 1]] = False
    assert np.max(np.abs(imbalance[internal])) < 1e-12
    assert abs(imbalance[0] + 1.0) < 1e-12  # sink absorbs the unit


@pytest.mark.parametrize("n", range(2, 9))
def test_image_of_KB_is_zero_total_flow(n):
    idx = build_indexer(n)
    rng = np.random.default_rng(23 + n)
    xi = rng.standard_normal(idx.num_reduced)
    kappa = ops.apply_KB(idx, xi)
    imbalance = ops.vertex_imbalance(idx, kappa)
    assert np.max(np.abs(imbalance)) < 1e-12
    assert abs(ops.total_flow(idx, kappa)) < 1e-12


# ---- masks, H, linear term ----


def test_effective_rank_examples():
    idx10 = build_indexer(10)
    assert ops.full_mask(idx10).effective_rank() == 4097
    idx4 = build_indexer(4)
    assert ops.ObservationMask(idx4, frozenset()).effective_rank() == 0
    two_sets = frozenset(
        (1 << i) | (1 << j) for i in range(4) for j in range(i + 1, 4)
    )
    assert ops.ObservationMask(idx4, two_sets).effective_rank() == 6


def test_mask_validation():
    idx = build_indexer(3)
    with pytest.raises(ops.OperatorError):
        ops.ObservationMask(idx, frozenset({0}))
    with pytest.raises(ops.OperatorError):
        ops.ObservationMask(idx, frozenset({8}))


def test_H_zero_and_spd(idx4):
    mask = ops.full_mask(idx4)
    d = np.ones(idx4.num_pairs)
    zero = np.zeros(idx4.num_reduced)
    np.testing.assert_array_equal(ops.apply_H(idx4, zero, d, mask), zero)
    rng = np.random.default_rng(2)
    for _ in range(10):
        xi = rng.standard_normal(idx4.num_reduced)
        dd = np.exp(rng.uniform(-3, 3, idx4.num_pairs))
        assert np.dot(xi, ops.apply_H(idx4, xi, dd, mask)) > 0


def test_H_matches_dense_assembly():
    idx = build_indexer(3)
    mask = ops.full_mask(idx)
    rng = np.random.default_rng(9)
    d = np.exp(rng.uniform(-2, 2, idx.num_pairs))
    from oracles import dense_from_operator

    H = dense_from_operator(
        lambda xi: ops.apply_H(idx, xi, d, mask), idx.num_reduced, idx.num_reduced
    )
    B = dense_B(idx)
    K = dense_K(idx)
    H_ref = B.T @ B + B.T @ K.T @ np.diag(d) @ K @ B
    np.testing.assert_allclose(H, H_ref, atol=1e-10)
    # masked variant
    observed = frozenset({0b011, 0b111})
    m2 = ops.ObservationMask(idx, observed)
    H2 = dense_from_operator(
        lambda xi: ops.apply_H(idx, xi, d, m2), idx.num_reduced, idx.num_reduced
    )
    P = np.diag(m2.pair_flags)
    H2_ref = B.T @ P @ B + B.T @ K.T @ np.diag(d) @ K @ B
    np.testing.assert_allclose(H2, H2_ref, atol=1e-10)


def test_H_rejects_bad_barrier(idx4):
    mask = ops.full_mask(idx4)
    xi = np.zeros(idx4.num_reduced)
    bad = np.ones(idx4.num_pairs)
    bad[3] = 0.0
    with pytest.raises(ops.OperatorError):
        ops.apply_H(idx4, xi, bad, mask)
    bad[3] = np.inf
    with pytest.raises(ops.OperatorError):
        ops.apply_H(idx4, xi, bad, mask)


def test_empty_mask_H_is_pure_barrier(idx4):
    mask = ops.ObservationMask(idx4, frozenset())
    rng = np.random.default_rng(31)
    xi = rng.standard_normal(idx4.num_reduced)
    d = np.ones(idx4.num_pairs)
    quad = np.dot(xi, ops.apply_H(idx4, xi, d, mask))
    assert quad == pytest.approx(np.sum(ops.apply_KB(idx4, xi) ** 2), rel=1e-12)


def test_masked_linear_term_full_mask_formula():
    idx = build_indexer(3)
    mask = ops.full_mask(idx)
    rng = np.random.default_rng(13)
    rho_hat = rng.uniform(size=idx.num_pairs)
    got = ops.masked_linear_term(idx, rho_hat, mask)
    expected = ops.apply_B_T(idx, rho_hat) + 1.0
    np.testing.assert_allclose(got, expected, atol=1e-12)
    # rho_hat = u gives zero
    u = ops.default_choice_vector(idx)
    np.testing.assert_allclose(
        ops.masked_linear_term(idx, u, mask), np.zeros(idx.num_reduced), atol=1e-15
    )


def test_masked_linear_term_singleton_mask_support():
    idx = build_indexer(3)
    mask = ops.ObservationMask(idx, frozenset({0b111}))
    rng = np.random.default_rng(14)
    c = ops.masked_linear_term(idx, rng.uniform(size=idx.num_pairs), mask)
    support = {idx.reduced_to_pair(j)[0] for j in np.nonzero(c)[0]}
    assert support == {0b111}
    assert np.count_nonzero(c) == 2


def test_data_block_spectrum_per_observed_set():
    # eigenvalues of B'PB per observed D: {|D|} plus |D|-2 ones
    for n in range(2, 6):
        idx = build_indexer(n)
        full = frozenset({(1 << n) - 1})
        m = ops.ObservationMask(idx, full)
        from oracles import dense_from_operator

        Q = dense_from_operator(
            lambda xi: ops.apply_Q(idx, m, xi), idx.num_reduced, idx.num_reduced
        )
        eig = np.sort(np.linalg.eigvalsh(Q))
        nonzero = eig[np.abs(eig) > 1e-9]
        expected = np.sort(np.concatenate([[n], np.ones(n - 2)]))
        np.testing.assert_allclose(nonzero, expected, atol=1e-9)


def test_data_block_spectrum_general_masks_n5():
    # with several observed sets the nonzero spectrum is the multiset union
    # of the per-set blocks, and the rank matches the effective rank
    from oracles import dense_from_operator

    idx = build_indexer(5)
    rng = np.random.default_rng(77)
    all_sets = np.arange(1, idx.num_vertices)
    for trial in range(3):
        chosen = rng.choice(all_sets, size=7, replace=False)
        mask = ops.ObservationMask(idx, frozenset(int(s) for s in chosen))
        Q = dense_from_operator(
            lambda xi: ops.apply_Q(idx, mask, xi), idx.num_reduced, idx.num_reduced
        )
        eig = np.sort(np.linalg.eigvalsh(Q))
        nonzero = eig[np.abs(eig) > 1e-9]
        expected = []
        for s in chosen:
            size = int(idx.subset_sizes[s])
            if size >= 2:
                expected.extend([1.0] * (size - 2) + [float(size)])
        np.testing.assert_allclose(nonzero, np.sort(expected), atol=1e-9)
        assert len(nonzero) == mask.effective_rank()
