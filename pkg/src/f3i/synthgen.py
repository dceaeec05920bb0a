"""Synthetic data: complete Gaussian matrices, MCAR / MAR-logistic / MNAR
Gaussian-self-masking missingness, and clustered binary labels.

All mechanisms preserve observed values exactly, are deterministic per seed,
and guarantee every feature retains at least 2 observed entries (resampling
the offending columns up to a bounded number of attempts, failing loudly).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import (
    DataMatrix,
    DegenerateClusteringError,
    GaussianParams,
    GenerationFailureError,
    InvalidArgumentError,
)

_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str  # "mcar" | "mar_logistic" | "mnar_gsm"
    p_miss: float
    f_obs_fraction: float = 0.3  # MAR only: fraction of always-observed features
    kf_clip: Tuple[float, float] = (0.01, 0.99)  # MNAR only

    def __post_init__(self):
        if self.mechanism not in ("mcar", "mar_logistic", "mnar_gsm"):
            raise InvalidArgumentError(f"unknown mechanism {self.mechanism!r}")
        if not (0 < self.p_miss < 1):
            raise InvalidArgumentError("p_miss must lie in (0, 1)")
        if not (0 < self.f_obs_fraction < 1):
            raise InvalidArgumentError("f_obs_fraction must lie in (0, 1)")


def generate_complete(n: int, f: int, params: GaussianParams, seed: int) -> DataMatrix:
    """i.i.d. Normal(mu_f, sigma^2) entries, no missingness."""
    if n < 1 or f < 1:
        raise InvalidArgumentError("n and f must be >= 1")
    mu = params.mu
    if mu.size == 1:
        mu = np.full(f, float(mu[0]))
    if mu.size != f:
        raise InvalidArgumentError(f"mu has length {mu.size}, expected {f}")
    rng = np.random.default_rng(seed)
    vals = rng.normal(loc=mu[None, :], scale=params.sigma, size=(n, f))
    return DataMatrix(vals, np.zeros((n, f), dtype=bool))


def _apply_mask_with_retention(X: DataMatrix, draw_column, rng) -> DataMatrix:
    """Draw a mask column by column, redrawing any column that would leave
    fewer than 2 observed entries; fail after a bounded number of attempts."""
    n, f = X.values.shape
    mask = np.zeros((n, f), dtype=bool)
    for j in range(f):
        for attempt in range(_MAX_RESAMPLE + 1):
            col = draw_column(j, rng)
            if (~col).sum() >= 2:
                mask[:, j] = col
                break
        else:
            raise GenerationFailureError(
                f"could not keep >= 2 observed entries in column {j} "
                f"after {_MAX_RESAMPLE} attempts"
            )
    out = X.values.copy()
    out[mask] = np.nan
    return DataMatrix(out, mask | X.mask)


def apply_mcar(X: DataMatrix, p_miss: float, seed: int) -> DataMatrix:
    """Mask each entry independently with probability p_miss."""
    if not (0 <= p_miss <= 1):
        raise InvalidArgumentError("p_miss must lie in [0, 1]")
    if p_miss == 0:
        return X
    rng = np.random.default_rng(seed)
    n = X.n_rows

    def draw(_j, rng):
        return rng.random(n) < p_miss

    return _apply_mask_with_retention(X, draw, rng)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def mar_mask_probabilities(x_obs: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    """P(masked | row) for each maskable feature: sigmoid(w_f . x_obs + b)."""
    return sigmoid(x_obs @ w.T + b)


def _calibrate_intercept(logits: np.ndarray, p_miss: float) -> float:
    """Bisection on the shared intercept so mean sigmoid(logits + b) hits p_miss."""
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = float(np.mean(sigmoid(logits + mid)))
        if abs(p - p_miss) <= 1e-4:
            return mid
        if p < p_miss:
            lo = mid
        else:
            hi = mid
    raise GenerationFailureError("intercept calibration did not converge")


def apply_mar_logistic(X: DataMatrix, spec: MissingnessSpec, seed: int) -> DataMatrix:
    """MAR: a random always-observed feature subset F_o drives a per-feature
    logistic masking model over the remaining features. Weights are standard
    normal, rescaled to unit latent variance; a shared intercept is calibrated
    by bisection so the mean masking probability equals p_miss within 1e-4."""
    n, f = X.values.shape
    n_obs = int(np.floor(spec.f_obs_fraction * f))
    if n_obs < 1:
        raise InvalidArgumentError("floor(f_obs_fraction * F) must be >= 1")
    rng = np.random.default_rng(seed)
    obs_features = np.sort(rng.choice(f, size=n_obs, replace=False))
    maskable = np.setdiff1d(np.arange(f), obs_features)
    x_obs = X.values[:, obs_features]
    w = rng.standard_normal((maskable.size, n_obs))
    latent = x_obs @ w.T  # (n, maskable)
    std = latent.std(axis=0)
    w = np.where(std[:, None] > 0, w / np.where(std == 0, 1.0, std)[:, None], 0.0)
    logits = x_obs @ w.T
    b = _calibrate_intercept(logits.ravel(), spec.p_miss)
    probs = sigmoid(logits + b)  # (n, maskable)
    col_of = {int(fj): k for k, fj in enumerate(maskable)}

    def draw(j, rng):
        if j in col_of:
            return rng.random(n) < probs[:, col_of[j]]
        return np.zeros(n, dtype=bool)

    return _apply_mask_with_retention(X, draw, rng)


def apply_mnar_gsm(
    X: DataMatrix, params: GaussianParams, spec: MissingnessSpec, seed: int
) -> DataMatrix:
    """MNAR Gaussian self-masking: P(missing | x) = K_f exp(-(x - mu_f)^2 / sigma^2)
    with K_f ~ Normal((3.5/3) p (1-p), 0.1) clipped to spec.kf_clip."""
    n, f = X.values.shape
    mu = params.mu
    if mu.size == 1:
        mu = np.full(f, float(mu[0]))
    rng = np.random.default_rng(seed)
    kf_mean = (3.5 / 3.0) * spec.p_miss * (1.0 - spec.p_miss)
    kf = np.clip(rng.normal(kf_mean, 0.1, size=f), spec.kf_clip[0], spec.kf_clip[1])
    probs = kf[None, :] * np.exp(-((X.values - mu[None, :]) ** 2) / params.sigma**2)

    def draw(j, rng):
        return rng.random(n) < probs[:, j]

    return _apply_mask_with_retention(X, draw, rng)


def _kmeans_two(points: np.ndarray, seed: int, restarts: int = 10,
                max_iter: int = 100, tol: float = 1e-8) -> np.ndarray:
    """2-cluster K-means with ++-style seeding, best of `restarts` by inertia."""
    if np.unique(points, axis=0).shape[0] < 2:
        raise DegenerateClusteringError("need at least 2 distinct points")
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    best_inertia, best_labels = np.inf, None
    for _ in range(restarts):
        c0 = points[rng.integers(n)]
        d2 = ((points - c0) ** 2).sum(axis=1)
        total = d2.sum()
        if total == 0:
            continue
        c1 = points[rng.choice(n, p=d2 / total)]
        centers = np.vstack([c0, c1])
        for _ in range(max_iter):
            d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d.argmin(axis=1)
            new_centers = centers.copy()
            for c in range(2):
                sel = labels == c
                if sel.any():
                    new_centers[c] = points[sel].mean(axis=0)
            shift = float(np.abs(new_centers - centers).max())
            centers = new_centers
            if shift <= tol:
                break
        d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d.argmin(axis=1)
        inertia = float(d[np.arange(n), labels].sum())
        if inertia < best_inertia - 1e-12 and len(np.unique(labels)) == 2:
            best_inertia, best_labels = inertia, labels
    if best_labels is None:
        raise DegenerateClusteringError("clustering failed to split the points")
    return best_labels.astype(np.int64)


def cluster_labels(X: DataMatrix, seed: int) -> np.ndarray:
    """Binary labels for the rows of a complete matrix via 2-cluster K-means."""
    if not X.is_complete:
        raise InvalidArgumentError("label generation requires a complete matrix")
    return _kmeans_two(X.values, seed)


def make_classification_labels(
    X_items: DataMatrix,
    X_users: DataMatrix,
    pairs: Sequence[Tuple[int, int]],
    seed: int,
) -> np.ndarray:
    """Binary labels for (item, user) pairs by 2-cluster K-means on the
    concatenated feature vectors."""
    if not (X_items.is_complete and X_users.is_complete):
        raise InvalidArgumentError("label generation requires complete matrices")
    pairs = list(pairs)
    vecs = np.array(
        [np.concatenate([X_items.values[i], X_users.values[u]]) for i, u in pairs]
    )
    return _kmeans_two(vecs, seed)
