"""Estimator-style wrapper so the projection composes with sklearn pipelines.

``RumProjection`` is a stateless transformer: ``fit`` validates the geometry
(the feature count must equal the pair count of some alternative set size)
and ``transform`` projects each row onto the polytope. ``conflict`` exposes
the per-row squared distances used for monitoring.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import operators as ops
from .ipm import IpmOptions
from .lattice import MAX_ALTERNATIVES, build_indexer, pair_count
from .projection import project_batch


def infer_alternative_count(num_features: int) -> int:
    """Recover n from N = n * 2**(n-1); pair counts are strictly increasing."""
    for n in range(1, MAX_ALTERNATIVES + 1):
        N = pair_count(n)
        if N == num_features:
            return n
        if N > num_features:
            break
    raise ValueError(
        f"{num_features} columns is not a valid pair count n * 2**(n-1)"
    )


class RumProjection(TransformerMixin, BaseEstimator):
    """Project rows of choice probabilities onto the consistent polytope.

    Parameters
    ----------
    n_alternatives : int or None
        Ground-set size; inferred from the column count when None.
    observed_sets : iterable of int or None
        Subset bitmasks carrying data; None means fully observed.
    tau, mu_tol, residual_tol, max_iter : solver knobs, see IpmOptions.
    n_jobs : batch parallelism for transform (1 = sequential).
    """

    def __init__(
        self,
        n_alternatives=None,
        observed_sets=None,
        tau=0.995,
        mu_tol=1e-9,
        residual_tol=1e-8,
        max_iter=100,
        n_jobs=1,
    ):
        self.n_alternatives = n_alternatives
        self.observed_sets = observed_sets
        self.tau = tau
        self.mu_tol = mu_tol
        self.residual_tol = residual_tol
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def _options(self) -> IpmOptions:
        return IpmOptions(
            tau=self.tau,
            mu_tol=self.mu_tol,
            residual_tol=self.residual_tol,
            max_iter=self.max_iter,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        n = self.n_alternatives or infer_alternative_count(X.shape[1])
        if pair_count(n) != X.shape[1]:
            raise ValueError(
                f"n_alternatives={n} implies {pair_count(n)} columns, "
                f"got {X.shape[1]}"
            )
        self.n_features_in_ = X.shape[1]
        self.indexer_ = build_indexer(n)
        if self.observed_sets is None:
            self.mask_ = ops.full_mask(self.indexer_)
        else:
            self.mask_ = ops.ObservationMask(
                self.indexer_, frozenset(int(s) for s in self.observed_sets)
            )
        self._options()  # validate knobs eagerly
        return self

    def _project_rows(self, X):
        check_is_fitted(self, "indexer_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=False)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} columns, got {X.shape[1]}"
            )
        return project_batch(
            self.indexer_, list(X), self.mask_, self._options(), n_jobs=self.n_jobs
        )

    def transform(self, X) -> np.ndarray:
        """Row-wise projections; failed rows surface as NaN, never raise."""
        results = self._project_rows(X)
        out = np.full((len(results), self.n_features_in_), np.nan)
        for i, res in enumerate(results):
            if res.converged:
                out[i] = res.rho_star
        return out

    def conflict(self, X) -> np.ndarray:
        """Squared masked distance per row (inf where the solver failed)."""
        results = self._project_rows(X)
        return np.array(
            [res.distance_sq if res.converged else np.inf for res in results]
        )
