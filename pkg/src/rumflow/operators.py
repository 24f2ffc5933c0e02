"""Matrix-free linear operators on pair vectors.

Everything here acts on dense ``float64`` vectors addressed through a shared
:class:`~rumflow.lattice.LatticeIndexer`: length-N pair vectors, length-|B|
reduced vectors, and the 0/1 observation mask. No operator ever materializes
a matrix; the subset transforms run the in-place superset/subset dynamic
program per alternative (all alternatives vectorized together), everything
else is fancy indexing plus segment sums.

Sign conventions. The masked projection objective is canonicalized as
``0.5 * xi' Q xi - c~' xi`` with ``c~ = B' P (rho_hat - u)``; under the full
mask ``c~ = B' rho_hat + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice import LatticeIndexer


class OperatorError(ValueError):
    """Operator contract violation (shape, mask, or barrier positivity)."""


def _check_len(indexer: LatticeIndexer, vec: np.ndarray, length: int, what: str):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (length,):
        raise OperatorError(f"{what} must have shape ({length},), got {vec.shape}")
    return vec


def check_pair_vector(indexer: LatticeIndexer, vec) -> np.ndarray:
    return _check_len(indexer, vec, indexer.num_pairs, "pair vector")


def check_reduced_vector(indexer: LatticeIndexer, vec) -> np.ndarray:
    return _check_len(indexer, vec, indexer.num_reduced, "reduced vector")


def check_barrier_diag(indexer: LatticeIndexer, d) -> np.ndarray:
    d = check_pair_vector(indexer, d)
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise OperatorError("barrier diagonal must be finite and strictly positive")
    return d


# ---------------------------------------------------------------------------
# subset-lattice transforms (Moebius / zeta, both orientations)
# ---------------------------------------------------------------------------


def lattice_transform(indexer: LatticeIndexer, vec: np.ndarray, mode: str):
    """Run the per-alternative in-place DP over compressed subset lattices.

    mode is one of 'superset_mobius' (K), 'superset_zeta' (K^-1),
    'subset_mobius' (K'), 'subset_zeta' ((K^-1)'). Works in the dtype of
    ``vec``; the public wrappers below fix float64.
    """
    gidx = indexer.alternative_gather
    work = vec[gidx]  # (n, 2**(n-1)) compressed copies, one row per alternative
    half = work.shape[1]
    for j in range(indexer.n - 1):
        w = work.reshape(indexer.n, half >> (j + 1), 2, 1 << j)
        if mode == "superset_mobius":
            w[:, :, 0, :] -= w[:, :, 1, :]
        elif mode == "superset_zeta":
            w[:, :, 0, :] += w[:, :, 1, :]
        elif mode == "subset_mobius":
            w[:, :, 1, :] -= w[:, :, 0, :]
        elif mode == "subset_zeta":
            w[:, :, 1, :] += w[:, :, 0, :]
        else:  # pragma: no cover
            raise ValueError(mode)
    out = np.empty_like(vec)
    out[gidx] = work
    return out


def apply_K(indexer: LatticeIndexer, rho) -> np.ndarray:
    """Alternating superset sum: (K rho)(D,x) = sum_{E >= D} (-1)^{|E\\D|} rho(E,x)."""
    return lattice_transform(indexer, check_pair_vector(indexer, rho), "superset_mobius")


def apply_K_T(indexer: LatticeIndexer, vec) -> np.ndarray:
    return lattice_transform(indexer, check_pair_vector(indexer, vec), "subset_mobius")


def apply_K_inv(indexer: LatticeIndexer, kappa) -> np.ndarray:
    """Plain superset sum: (K^-1 kappa)(D,x) = sum_{E >= D} kappa(E,x)."""
    return lattice_transform(indexer, check_pair_vector(indexer, kappa), "superset_zeta")


def apply_K_inv_T(indexer: LatticeIndexer, vec) -> np.ndarray:
    return lattice_transform(indexer, check_pair_vector(indexer, vec), "subset_zeta")


# ---------------------------------------------------------------------------
# reduced-coordinate embedding B, restriction R, constants u and b
# ---------------------------------------------------------------------------


def apply_B(indexer: LatticeIndexer, xi) -> np.ndarray:
    """Copy xi onto non-max pairs; the (D, max D) slot gets minus the block sum."""
    xi = check_reduced_vector(indexer, xi)
    out = np.zeros(indexer.num_pairs)
    out[indexer.reduced_to_dense] = xi
    sums = np.bincount(
        indexer.reduced_subset - 1, weights=xi, minlength=indexer.num_sets
    )
    out[indexer.maxpair_of_subset[1:]] = -sums
    return out


def apply_B_T(indexer: LatticeIndexer, rho) -> np.ndarray:
    """(B' rho)(D,x) = rho(D,x) - rho(D, max D) on reduced pairs."""
    rho = check_pair_vector(indexer, rho)
    return rho[indexer.reduced_to_dense] - rho[indexer.reduced_maxpair]


def apply_R(indexer: LatticeIndexer, rho) -> np.ndarray:
    return check_pair_vector(indexer, rho)[indexer.reduced_to_dense]


def apply_R_T(indexer: LatticeIndexer, xi) -> np.ndarray:
    xi = check_reduced_vector(indexer, xi)
    out = np.zeros(indexer.num_pairs)
    out[indexer.reduced_to_dense] = xi
    return out


def apply_KB(indexer: LatticeIndexer, xi) -> np.ndarray:
    return apply_K(indexer, apply_B(indexer, xi))


def apply_KB_T(indexer: LatticeIndexer, vec) -> np.ndarray:
    return apply_B_T(indexer, apply_K_T(indexer, vec))


def default_choice_vector(indexer: LatticeIndexer) -> np.ndarray:
    """u: the deterministic choice vector picking max D everywhere."""
    u = np.zeros(indexer.num_pairs)
    u[indexer.maxpair_of_subset[1:]] = 1.0
    return u


def default_flow_vector(indexer: LatticeIndexer) -> np.ndarray:
    """b = K u: unit flow down the chain {0..x} -> {0..x-1}."""
    b = np.zeros(indexer.num_pairs)
    for x in range(indexer.n):
        b[indexer.pair_to_dense((1 << (x + 1)) - 1, x)] = 1.0
    return b


def uniform_choice_vector(indexer: LatticeIndexer) -> np.ndarray:
    """Interior reference point: 1/|D| on every pair of D."""
    return 1.0 / indexer.subset_sizes[indexer.pair_subset]


# ---------------------------------------------------------------------------
# observation mask
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationMask:
    """Set of observed (nonempty) choice sets; None observed_sets = full mask."""

    indexer: LatticeIndexer
    observed_sets: frozenset[int] | None = None

    def __post_init__(self):
        if self.observed_sets is not None:
            sets = frozenset(int(s) for s in self.observed_sets)
            for s in sets:
                if not 0 < s < self.indexer.num_vertices:
                    raise OperatorError(
                        f"observed set 0x{s:x} out of range for n={self.indexer.n}"
                    )
            object.__setattr__(self, "observed_sets", sets)

    @property
    def is_full(self) -> bool:
        return (
            self.observed_sets is None
            or len(self.observed_sets) == self.indexer.num_sets
        )

    @cached_property
    def pair_flags(self) -> np.ndarray:
        """0/1 per dense pair; 1 iff the pair's subset is observed."""
        if self.observed_sets is None:
            return np.ones(self.indexer.num_pairs)
        flags = np.zeros(self.indexer.num_vertices)
        if self.observed_sets:
            flags[np.fromiter(self.observed_sets, dtype=np.int64)] = 1.0
        return flags[self.indexer.pair_subset]

    def apply(self, rho) -> np.ndarray:
        rho = check_pair_vector(self.indexer, rho)
        if self.observed_sets is None:
            return rho.copy()
        # where() not multiply: unobserved slots may legitimately hold NaN
        return np.where(self.pair_flags == 1.0, rho, 0.0)

    def effective_rank(self) -> int:
        """r = sum over observed D of (|D| - 1)."""
        if self.observed_sets is None:
            return self.indexer.num_reduced
        sizes = self.indexer.subset_sizes
        return int(sum(int(sizes[s]) - 1 for s in self.observed_sets))


def full_mask(indexer: LatticeIndexer) -> ObservationMask:
    return ObservationMask(indexer)


# ---------------------------------------------------------------------------
# composite quadratic pieces
# ---------------------------------------------------------------------------


def apply_Q(indexer: LatticeIndexer, mask: ObservationMask, xi) -> np.ndarray:
    """Data block B' P B applied to a reduced vector."""
    return apply_B_T(indexer, mask.apply(apply_B(indexer, xi)))


def apply_H(indexer: LatticeIndexer, xi, d, mask: ObservationMask) -> np.ndarray:
    """Newton operator B'PB xi + (KB)' diag(d) (KB) xi."""
    d = check_barrier_diag(indexer, d)
    xi = check_reduced_vector(indexer, xi)
    barrier = apply_KB_T(indexer, d * apply_KB(indexer, xi))
    return apply_Q(indexer, mask, xi) + barrier


def masked_linear_term(indexer: LatticeIndexer, rho_hat, mask: ObservationMask):
    """c~ = B' P (rho_hat - u); with the full mask this is B' rho_hat + 1."""
    rho_hat = check_pair_vector(indexer, rho_hat)
    u = default_choice_vector(indexer)
    return apply_B_T(indexer, mask.apply(rho_hat - u))


# ---------------------------------------------------------------------------
# flow diagnostics (used by tests and the bench harness)
# ---------------------------------------------------------------------------


def vertex_imbalance(indexer: LatticeIndexer, kappa) -> np.ndarray:
    """Signed incidence sums per vertex: out-edges minus in-edges from above.

    Zero at every internal vertex iff kappa is conservative; the entry at the
    full set X equals the total flow.
    """
    kappa = check_pair_vector(indexer, kappa)
    outflow = np.bincount(
        indexer.pair_subset, weights=kappa, minlength=indexer.num_vertices
    )
    inflow = np.bincount(
        indexer.edge_lower, weights=kappa, minlength=indexer.num_vertices
    )
    return outflow - inflow


def total_flow(indexer: LatticeIndexer, kappa) -> float:
    kappa = check_pair_vector(indexer, kappa)
    top = indexer.num_vertices - 1
    off = int(indexer.offsets[top])
    return float(np.sum(kappa[off : off + indexer.n]))
