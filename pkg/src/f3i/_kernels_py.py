"""NumPy fallback for the compiled distance/kernel hot loops."""
from __future__ import annotations

import numpy as np

BACKEND = "fallback"

# Below this many pairwise terms, use exact elementwise differences; above it,
# the memory-friendly inner-product expansion.
_DIRECT_LIMIT = 20_000_000


def sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (len(A), len(B))."""
    n, m, f = A.shape[0], B.shape[0], A.shape[1]
    if n * m * f <= _DIRECT_LIMIT:
        diff = A[:, None, :] - B[None, :, :]
        return np.einsum("nmf,nmf->nm", diff, diff)
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    d = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    return d


def kernel_stats(A: np.ndarray, B: np.ndarray, inv_scale: float):
    """Per-row log-sum-exp and softmax weights of -inv_scale * ||a_i - b_j||^2.

    Returns (lse, W) with lse[i] = logsumexp_j(-inv_scale * d_ij) and W the
    row-stochastic softmax weight matrix.
    """
    e = sq_dists(A, B)
    e *= -inv_scale
    m = e.max(axis=1)
    np.exp(e - m[:, None], out=e)
    s = e.sum(axis=1)
    lse = m + np.log(s)
    e /= s[:, None]
    return lse, e
