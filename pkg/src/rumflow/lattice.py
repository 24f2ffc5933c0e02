"""Canonical indexing of choice pairs and the subset-lattice graph.

The ground set is ``X = {0, ..., n-1}``. A *pair* is ``(D, x)`` with ``x`` a
member of the nonempty subset ``D``; there are ``N = n * 2**(n-1)`` of them.
Pairs double as edges of the subset lattice: the edge indexed by ``(D, x)``
joins vertex ``D`` to vertex ``D \\ {x}``, so the graph has ``2**n`` vertices
and ``N`` edges.

Dense layout: subsets ascend by bitmask value, alternatives ascend within a
subset. Because alternatives ascend, the pair ``(D, max D)`` is always the
last pair of its subset block. Reduced pairs drop that last pair per subset,
leaving ``N - (2**n - 1)`` coordinates.

Heavy lookup tables are built lazily so that indexers for large ``n`` stay
cheap to construct when only the counting formulas are needed.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

MAX_ALTERNATIVES = 24


class LatticeError(ValueError):
    """Invalid lattice configuration or index."""


def _check_n(n: int) -> int:
    n = int(n)
    if not 1 <= n <= MAX_ALTERNATIVES:
        raise LatticeError(
            f"alternative count must be in [1, {MAX_ALTERNATIVES}], got {n}"
        )
    return n


def pair_count(n: int) -> int:
    """N = n * 2**(n-1), the number of pairs (D, x) with x in D."""
    return _check_n(n) * (1 << (n - 1))


def reduced_count(n: int) -> int:
    """Number of pairs after dropping (D, max D) from every subset."""
    return pair_count(n) - ((1 << _check_n(n)) - 1)


class LatticeIndexer:
    """Bijections between pairs, dense indices, reduced indices and edges.

    Immutable after construction; safe to share across workers. All index
    arrays are int64 and all derived tables are cached on first access.
    """

    def __init__(self, n: int):
        self.n = _check_n(n)
        self.num_vertices = 1 << self.n
        self.num_sets = self.num_vertices - 1  # nonempty subsets
        self.num_pairs = pair_count(self.n)
        self.num_reduced = reduced_count(self.n)

    def __repr__(self) -> str:
        return f"LatticeIndexer(n={self.n})"

    # ---- per-subset tables (size 2**n) ----

    @cached_property
    def subset_sizes(self) -> np.ndarray:
        """popcount of every subset bitmask, index 0..2**n-1."""
        return np.bitwise_count(
            np.arange(self.num_vertices, dtype=np.uint64)
        ).astype(np.int64)

    @cached_property
    def subset_max(self) -> np.ndarray:
        """Highest set bit per subset; -1 for the empty set."""
        exps = np.frexp(np.arange(self.num_vertices, dtype=np.float64))[1]
        return (exps - 1).astype(np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Dense offset of each subset's pair block."""
        off = np.zeros(self.num_vertices, dtype=np.int64)
        np.cumsum(self.subset_sizes[:-1], out=off[1:])
        return off

    @cached_property
    def maxpair_of_subset(self) -> np.ndarray:
        """Dense index of (D, max D); last pair of each block. Entry 0 unused."""
        return self.offsets + self.subset_sizes - 1

    # ---- per-pair tables (size N) ----

    @cached_property
    def _pair_tables(self) -> tuple[np.ndarray, np.ndarray]:
        bits = (
            np.arange(self.num_vertices, dtype=np.int64)[:, None]
            >> np.arange(self.n, dtype=np.int64)[None, :]
        ) & 1
        subset, alt = np.nonzero(bits)
        return subset.astype(np.int64), alt.astype(np.int64)

    @property
    def pair_subset(self) -> np.ndarray:
        """Subset bitmask of every dense pair index."""
        return self._pair_tables[0]

    @property
    def pair_alt(self) -> np.ndarray:
        """Alternative of every dense pair index."""
        return self._pair_tables[1]

    @cached_property
    def is_reduced_pair(self) -> np.ndarray:
        return self.pair_alt != self.subset_max[self.pair_subset]

    @cached_property
    def reduced_to_dense(self) -> np.ndarray:
        return np.nonzero(self.is_reduced_pair)[0]

    @cached_property
    def dense_to_reduced(self) -> np.ndarray:
        """Reduced index per dense pair; -1 on the (D, max D) pairs."""
        out = np.full(self.num_pairs, -1, dtype=np.int64)
        out[self.reduced_to_dense] = np.arange(self.num_reduced)
        return out

    @cached_property
    def reduced_subset(self) -> np.ndarray:
        """Subset bitmask per reduced index."""
        return self.pair_subset[self.reduced_to_dense]

    @cached_property
    def reduced_maxpair(self) -> np.ndarray:
        """Dense index of (D, max D) for each reduced pair's subset."""
        return self.maxpair_of_subset[self.reduced_subset]

    # ---- per-alternative compressed lattices for the subset transforms ----

    @cached_property
    def alternative_gather(self) -> np.ndarray:
        """(n, 2**(n-1)) dense indices: row x, column m -> pair (expand(m)|{x}, x).

        Column m runs over subsets of X \\ {x} compressed to n-1 bits; bit j of
        m stands for the j-th element of X \\ {x} in ascending order.
        """
        half = 1 << (self.n - 1)
        m = np.arange(half, dtype=np.int64)
        out = np.empty((self.n, half), dtype=np.int64)
        for x in range(self.n):
            low = m & ((1 << x) - 1)
            high = (m >> x) << (x + 1)
            subset = high | low | (1 << x)
            below = np.bitwise_count(
                (subset & ((1 << x) - 1)).astype(np.uint64)
            ).astype(np.int64)
            out[x] = self.offsets[subset] + below
        out.setflags(write=False)
        return out

    # ---- scalar index helpers ----

    def pair_to_dense(self, subset: int, alt: int) -> int:
        self._check_pair(subset, alt)
        below = int(subset & ((1 << alt) - 1)).bit_count()
        return int(self.offsets[subset]) + below

    def dense_to_pair(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.num_pairs:
            raise LatticeError(f"dense index {idx} out of range [0, {self.num_pairs})")
        return int(self.pair_subset[idx]), int(self.pair_alt[idx])

    def pair_to_reduced(self, subset: int, alt: int) -> int:
        r = int(self.dense_to_reduced[self.pair_to_dense(subset, alt)])
        if r < 0:
            raise LatticeError(
                f"pair (0x{subset:x}, {alt}) has alt == max(D); no reduced index"
            )
        return r

    def reduced_to_pair(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.num_reduced:
            raise LatticeError(
                f"reduced index {idx} out of range [0, {self.num_reduced})"
            )
        return self.dense_to_pair(int(self.reduced_to_dense[idx]))

    def _check_pair(self, subset: int, alt: int) -> None:
        if not 0 < subset < self.num_vertices:
            raise LatticeError(f"subset 0x{subset:x} out of range for n={self.n}")
        if not 0 <= alt < self.n or not (subset >> alt) & 1:
            raise LatticeError(f"alternative {alt} not in subset 0x{subset:x}")

    # ---- edge incidence ----

    @cached_property
    def edge_lower(self) -> np.ndarray:
        """Lower endpoint D \\ {x} of each edge (the upper endpoint is pair_subset)."""
        return self.pair_subset ^ (np.int64(1) << self.pair_alt)

    def incident_edges(self, subset: int) -> list[tuple[int, int]]:
        """Edges touching vertex ``subset`` as (dense edge index, sign).

        Sign +1 on the edges (subset, x) leaving downward, -1 on the edges
        (subset | {y}, y) arriving from above. With this convention the
        conservation statement at every vertex is sum(sign * kappa) == 0,
        which at the top vertex reads "total flow is zero" and at the empty
        set is the redundant sink condition.
        """
        if not 0 <= subset < self.num_vertices:
            raise LatticeError(f"subset 0x{subset:x} out of range for n={self.n}")
        out: list[tuple[int, int]] = []
        off = int(self.offsets[subset])
        for k in range(int(self.subset_sizes[subset])):
            out.append((off + k, +1))
        for y in range(self.n):
            if not (subset >> y) & 1:
                out.append((self.pair_to_dense(subset | (1 << y), y), -1))
        return out


def build_indexer(n: int) -> LatticeIndexer:
    """Construct the canonical indexer for ``n`` alternatives."""
    return LatticeIndexer(n)
