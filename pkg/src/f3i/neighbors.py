"""Spatial index over a complete reference set: Chebyshev K-NN queries and
Gaussian-kernel log-density evaluation.

Two metrics deliberately coexist: neighbor queries use the Chebyshev (max)
metric, while the kernel density uses squared Euclidean distances with the
exponent ||x - z||^2 / (4h). Note the 4h scale (not the conventional 2h^2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .core import DataMatrix, InvalidArgumentError

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NeighborIndex:
    reference: np.ndarray  # (N', F), complete
    tree: cKDTree
    h: float

    @property
    def n_reference(self) -> int:
        return self.reference.shape[0]

    @property
    def n_features(self) -> int:
        return self.reference.shape[1]


def build_index(Z, h: float) -> NeighborIndex:
    """Build the k-d tree index once per run; h is the density bandwidth."""
    if isinstance(Z, DataMatrix):
        Z = Z.values
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise InvalidArgumentError("reference must be a 2-D matrix")
    if not np.all(np.isfinite(Z)):
        raise InvalidArgumentError("reference must be complete (finite values only)")
    if not (h > 0):
        raise InvalidArgumentError("bandwidth h must be positive")
    # balanced_tree=False keeps construction cheap; queries dominate anyway
    return NeighborIndex(Z, cKDTree(Z), float(h))


def _rerank_row(Z: np.ndarray, x: np.ndarray, K: int, candidates: np.ndarray) -> np.ndarray:
    """Exact (distance, index) lexicographic ranking over candidate rows."""
    cand = np.sort(np.asarray(candidates, dtype=np.intp))
    d = np.max(np.abs(Z[cand] - x), axis=1) if Z.shape[1] else np.zeros(len(cand))
    order = np.argsort(d, kind="stable")  # stable: ties stay in index order
    return cand[order[:K]]


def knn_chebyshev_batch(idx: NeighborIndex, X, K: int) -> np.ndarray:
    """Indices of the K Chebyshev-nearest reference rows for each query row.

    Ordering is strictly by (distance, reference row index).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    n_ref = idx.n_reference
    if K < 1 or K > n_ref:
        raise InvalidArgumentError(f"K={K} out of range for {n_ref} reference rows")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("query points must be finite")
    Z = idx.reference
    if K == n_ref:
        out = np.vstack([_rerank_row(Z, x, K, np.arange(n_ref)) for x in X])
        return out[0] if single else out
    k_query = min(K + 1, n_ref)
    d, nn = idx.tree.query(X, k=k_query, p=np.inf)
    d = np.atleast_2d(d)
    nn = np.atleast_2d(nn)
    out = nn[:, :K].astype(np.intp).copy()
    # Repair any row whose first K distances contain ties (the tree does not
    # guarantee index order among equidistant points) or whose K-th distance
    # reappears just past the cutoff.
    has_tie = (np.diff(d[:, :k_query], axis=1) <= 0).any(axis=1)
    for i in np.nonzero(has_tie)[0]:
        r = d[i, K - 1]
        candidates = idx.tree.query_ball_point(X[i], r=r, p=np.inf)
        if len(candidates) < K:  # floating-point edge: fall back to full scan
            candidates = np.arange(n_ref)
        out[i] = _rerank_row(Z, X[i], K, np.asarray(candidates))
    return out[0] if single else out


def knn_chebyshev(idx: NeighborIndex, x, K: int) -> np.ndarray:
    return knn_chebyshev_batch(idx, x, K)


def log_density_batch(idx: NeighborIndex, X) -> np.ndarray:
    """log D(x) for each query row, with D the Gaussian-kernel density
    (1/N') sum_j (sqrt(2 pi) h)^(-F) exp(-||x - z_j||^2 / (4h)),
    computed exhaustively with a stable log-sum-exp."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("query points must be finite")
    lse, _ = kernels.kernel_stats(X, idx.reference, 1.0 / (4.0 * idx.h))
    f = idx.n_features
    out = lse - np.log(idx.n_reference) - f * (_LOG_SQRT_2PI + np.log(idx.h))
    return out[0] if single else out


def log_density(idx: NeighborIndex, x) -> float:
    return float(log_density_batch(idx, x))
