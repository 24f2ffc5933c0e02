"""Independent brute-force references shared by the test modules.

Everything here is assembled straight from definitions (explicit loops over
subsets, dense matrices, exhaustive enumeration) so that the fast paths in
the package are checked against code that shares none of their machinery.
"""

from __future__ import annotations

import itertools

import numpy as np

from rumflow.lattice import LatticeIndexer


def dense_K(indexer: LatticeIndexer) -> np.ndarray:
    """K by definition: K[(D,x),(E,x)] = (-1)^{|E\\D|} for E >= D."""
    n, N = indexer.n, indexer.num_pairs
    K = np.zeros((N, N))
    for i in range(N):
        D, x = indexer.dense_to_pair(i)
        rest = [y for y in range(n) if y != x and not (D >> y) & 1]
        for k in range(len(rest) + 1):
            for extra in itertools.combinations(rest, k):
                E = D
                for y in extra:
                    E |= 1 << y
                K[i, indexer.pair_to_dense(E, x)] = (-1.0) ** k
    return K


def dense_K_inv(indexer: LatticeIndexer) -> np.ndarray:
    """Superset sums by definition (no signs)."""
    n, N = indexer.n, indexer.num_pairs
    Z = np.zeros((N, N))
    for i in range(N):
        D, x = indexer.dense_to_pair(i)
        rest = [y for y in range(n) if y != x and not (D >> y) & 1]
        for k in range(len(rest) + 1):
            for extra in itertools.combinations(rest, k):
                E = D
                for y in extra:
                    E |= 1 << y
                Z[i, indexer.pair_to_dense(E, x)] = 1.0
    return Z


def dense_B(indexer: LatticeIndexer) -> np.ndarray:
    N, r = indexer.num_pairs, indexer.num_reduced
    B = np.zeros((N, r))
    for j in range(r):
        D, x = indexer.reduced_to_pair(j)
        B[indexer.pair_to_dense(D, x), j] = 1.0
        mx = max(y for y in range(indexer.n) if (D >> y) & 1)
        B[indexer.pair_to_dense(D, mx), j] = -1.0
    return B


def dense_from_operator(apply_fn, dim_in: int, dim_out: int) -> np.ndarray:
    """Materialize any linear map by probing with basis vectors."""
    A = np.zeros((dim_out, dim_in))
    for j in range(dim_in):
        e = np.zeros(dim_in)
        e[j] = 1.0
        A[:, j] = apply_fn(e)
    return A


def ranking_vertices(indexer: LatticeIndexer) -> np.ndarray:
    """Columns are the deterministic choice vectors of all n! rankings.

    A ranking (permutation giving descending preference) chooses from D the
    member appearing earliest in the ranking.
    """
    n, N = indexer.n, indexer.num_pairs
    cols = []
    for perm in itertools.permutations(range(n)):
        v = np.zeros(N)
        for D in range(1, 1 << n):
            best = next(y for y in perm if (D >> y) & 1)
            v[indexer.pair_to_dense(D, best)] = 1.0
        cols.append(v)
    return np.column_stack(cols)


def simplex_least_squares(V: np.ndarray, p: np.ndarray, tol: float = 1e-12):
    """min ||V w - p||^2 over the probability simplex, by active-set enumeration.

    Maintains a support set, solves the equality-constrained KKT system on
    it, drops negative weights, and admits the most violated vertex until
    the multiplier test passes. Finite termination; asserts on cycling.
    """
    m = V.shape[1]
    gram = V.T @ V
    lin = V.T @ p

    def solve_support(support: list[int]) -> np.ndarray:
        k = len(support)
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = gram[np.ix_(support, support)]
        A[:k, k] = 1.0
        A[k, :k] = 1.0
        rhs = np.zeros(k + 1)
        rhs[:k] = lin[support]
        rhs[k] = 1.0
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        return sol  # weights..., multiplier

    start = int(np.argmin(np.sum((V - p[:, None]) ** 2, axis=0)))
    support = [start]
    w_sup = np.array([1.0, 0.0])
    for _ in range(20 * m + 20):
        sol = solve_support(support)
        weights = sol[:-1]
        if np.any(weights < -tol):
            drop = int(np.argmin(weights))
            support.pop(drop)
            continue
        w = np.zeros(m)
        w[support] = np.maximum(weights, 0.0)
        w /= w.sum()
        grad = gram @ w - lin  # gradient of 0.5||Vw-p||^2
        nu = sol[-1]  # on the support grad_i = -nu, so mu_j = grad_j + nu
        reduced = grad + nu
        candidates = [j for j in range(m) if j not in support]
        if not candidates:
            break
        j_best = min(candidates, key=lambda j: reduced[j])
        if reduced[j_best] >= -1e-10 * max(1.0, np.abs(grad).max()):
            break
        support.append(j_best)
    else:
        raise AssertionError("active-set oracle failed to terminate")
    w = np.zeros(m)
    sol = solve_support(support)
    w[support] = np.maximum(sol[:-1], 0.0)
    w /= w.sum()
    return w, float(np.sum((V @ w - p) ** 2))


def simplex_least_squares_exhaustive(V: np.ndarray, p: np.ndarray):
    """Same QP by trying every support subset; only viable for few columns."""
    m = V.shape[1]
    best = (None, np.inf)
    for size in range(1, m + 1):
        for support in itertools.combinations(range(m), size):
            k = len(support)
            A = np.zeros((k + 1, k + 1))
            sub = V[:, list(support)]
            A[:k, :k] = sub.T @ sub
            A[:k, k] = 1.0
            A[k, :k] = 1.0
            rhs = np.concatenate([sub.T @ p, [1.0]])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            wsup = sol[:k]
            if np.any(wsup < -1e-12):
                continue
            w = np.zeros(m)
            w[list(support)] = np.maximum(wsup, 0.0)
            s = w.sum()
            if s <= 0:
                continue
            w /= s
            dist = float(np.sum((V @ w - p) ** 2))
            if dist < best[1]:
                best = (w, dist)
    return best


def project_onto_rum_oracle(indexer: LatticeIndexer, rho_hat: np.ndarray):
    """Vertex-representation projection: distance to conv(ranking vertices)."""
    V = ranking_vertices(indexer)
    w, dist = simplex_least_squares(V, np.asarray(rho_hat, dtype=np.float64))
    return V @ w, dist


def row_normalized_random(indexer: LatticeIndexer, rng: np.random.Generator):
    """Random vector in [0,1]^N normalized to sum 1 within every subset."""
    raw = rng.uniform(size=indexer.num_pairs)
    sums = np.bincount(
        indexer.pair_subset, weights=raw, minlength=indexer.num_vertices
    )
    return raw / sums[indexer.pair_subset]
