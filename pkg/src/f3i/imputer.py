"""Imputers: initial KNN imputation, the per-row improvement step, the full
online-learning-guided loop, out-of-sample imputation, and simple baselines.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    Config,
    DataMatrix,
    InvalidArgumentError,
    SimplexWeights,
    l2_denormalize_rows,
    l2_normalize_rows,
)
from .learner import AdaHedgeState, adahedge_predict, adahedge_update
from .neighbors import NeighborIndex, build_index, knn_chebyshev, log_density_batch
from .objective import eval_G_and_grad, imputed_matrix, make_context, solve_bandwidth

STOP_BUDGET = "budget_exhausted"
STOP_EARLY = "early_stop_G_nonpositive"

# pairwise-term budget below which nan-aware distances use exact elementwise diffs
_DIRECT_LIMIT = 20_000_000


def nan_sq_dists(A_vals, A_obs, B_vals, B_obs) -> np.ndarray:
    """Squared nan-aware Euclidean distances, scaled by F / #commonly-observed.

    Rows sharing no observed coordinate are at infinite distance.
    """
    A_obs = np.asarray(A_obs, dtype=bool)
    B_obs = np.asarray(B_obs, dtype=bool)
    Af = np.where(A_obs, A_vals, 0.0)
    Bf = np.where(B_obs, B_vals, 0.0)
    n, m, f = Af.shape[0], Bf.shape[0], Af.shape[1]
    if n * m * f <= _DIRECT_LIMIT:
        common = A_obs[:, None, :] & B_obs[None, :, :]
        diff = np.where(common, Af[:, None, :] - Bf[None, :, :], 0.0)
        sq = np.einsum("nmf,nmf->nm", diff, diff)
        cnt = common.sum(axis=2).astype(np.float64)
    else:
        cnt = A_obs.astype(np.float64) @ B_obs.T.astype(np.float64)
        sq = (
            (Af**2) @ B_obs.T.astype(np.float64)
            + A_obs.astype(np.float64) @ (Bf**2).T
            - 2.0 * (Af @ Bf.T)
        )
        np.maximum(sq, 0.0, out=sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = f * sq / cnt
    d2[cnt == 0] = np.inf
    return d2


def _feature_donor_counts(mask: np.ndarray) -> np.ndarray:
    return (~mask).sum(axis=0)


def _check_observed_counts(mask: np.ndarray) -> None:
    counts = _feature_donor_counts(mask)
    bad = np.nonzero(counts < 2)[0]
    if bad.size:
        raise InvalidArgumentError(
            f"features {bad.tolist()} have fewer than 2 observed entries"
        )


def _clamped_k(K: int, counts: np.ndarray) -> np.ndarray:
    ks = np.minimum(K, counts)
    if np.any(ks < K):
        clamped = np.nonzero(counts < K)[0]
        warnings.warn(
            f"K={K} clamped to the observed count for features {clamped.tolist()}",
            stacklevel=3,
        )
    return ks


def _knn_feature_impute(X: DataMatrix, K: int, weighting: str) -> DataMatrix:
    """Per-cell KNN imputation by nan-aware Euclidean distance.

    weighting: "uniform" (plain mean of the K nearest donors) or "distance"
    (weights proportional to 1/d; exact matches take all the weight).
    """
    _check_observed_counts(X.mask)
    vals = X.values
    mask = X.mask
    counts = _feature_donor_counts(mask)
    ks = _clamped_k(K, counts)
    d2 = nan_sq_dists(vals, ~mask, vals, ~mask)
    out = vals.copy()
    for f in range(X.n_cols):
        rows = np.nonzero(mask[:, f])[0]
        if rows.size == 0:
            continue
        donors = np.nonzero(~mask[:, f])[0]  # ascending index: stable sort breaks ties
        kf = int(ks[f])
        sub = d2[np.ix_(rows, donors)]
        order = np.argsort(sub, axis=1, kind="stable")[:, :kf]
        sel_vals = vals[donors[order], f]  # (len(rows), kf)
        if weighting == "uniform":
            out[rows, f] = sel_vals.mean(axis=1)
        else:
            d = np.sqrt(np.take_along_axis(sub, order, axis=1))
            w = np.zeros_like(d)
            exact = d == 0
            has_exact = exact.any(axis=1)
            w[has_exact] = exact[has_exact]
            with np.errstate(divide="ignore"):
                inv = 1.0 / d[~has_exact]
            inv[~np.isfinite(inv)] = 0.0
            all_zero = inv.sum(axis=1) == 0
            inv[all_zero] = 1.0  # all-infinite distances: fall back to uniform
            w[~has_exact] = inv
            w /= w.sum(axis=1, keepdims=True)
            out[rows, f] = (w * sel_vals).sum(axis=1)
    return DataMatrix(out, mask)


def knn_initial_impute(X: DataMatrix, K: int) -> DataMatrix:
    """Uniform-weight KNN imputation producing the starting matrix X0."""
    return _knn_feature_impute(X, K, "uniform")


def knn_distance_impute(X: DataMatrix, K: int) -> DataMatrix:
    """KNN imputation with inverse-distance neighbor weights."""
    return _knn_feature_impute(X, K, "distance")


def mean_impute(X: DataMatrix) -> DataMatrix:
    """Each missing cell replaced by its column's observed mean."""
    counts = _feature_donor_counts(X.mask)
    if np.any(counts < 1):
        bad = np.nonzero(counts < 1)[0]
        raise InvalidArgumentError(f"columns {bad.tolist()} have no observed entries")
    sums = np.where(X.mask, 0.0, X.values).sum(axis=0)
    means = sums / counts
    out = np.where(X.mask, means[None, :], X.values)
    return DataMatrix(out, X.mask)


def impute_step(x_prev, mask_row, alpha, idx: NeighborIndex, K: int) -> np.ndarray:
    """One improvement step for a single row: replace the originally-missing
    coordinates by the alpha-weighted combination of the K Chebyshev-nearest
    reference rows of x_prev."""
    x_prev = np.asarray(x_prev, dtype=np.float64)
    mask_row = np.asarray(mask_row, dtype=bool)
    a = alpha.w if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=np.float64)
    nn = knn_chebyshev(idx, x_prev, K)
    combo = a @ idx.reference[nn]
    return np.where(mask_row, combo, x_prev)


@dataclass
class ImputationTrace:
    """Everything needed to audit a run: per-round weights, objective values,
    gradients, learner losses, and the matrix history X^0..X^{final_t}."""

    alphas: List[np.ndarray] = field(default_factory=list)
    g_values: List[float] = field(default_factory=list)
    grads: List[np.ndarray] = field(default_factory=list)
    loss_vectors: List[np.ndarray] = field(default_factory=list)
    history: List[np.ndarray] = field(default_factory=list)
    stop_reason: str = STOP_BUDGET
    final_t: int = 0
    log_density_start: Optional[np.ndarray] = None
    log_density_end: Optional[np.ndarray] = None
    index: Optional[NeighborIndex] = None
    mask: Optional[np.ndarray] = None
    K: int = 0
    eta: float = 0.0
    h: float = 0.0

    @property
    def alpha_final(self) -> np.ndarray:
        return self.alphas[-1]


def f3i_run(X: DataMatrix, cfg: Config) -> Tuple[DataMatrix, ImputationTrace]:
    """The full loop: initial KNN imputation, then up to max_iter rounds where
    an AdaHedge learner proposes neighbor weights, every row is re-imputed, the
    learner is charged the negated objective gradient, and the loop breaks as
    soon as the objective stops being positive.

    Returns X^T when the budget is exhausted, X^{t-1} on an early stop.
    """
    scales = None
    if cfg.normalize:
        X, scales = l2_normalize_rows(X)
    K = cfg.n_neighbors
    X0 = knn_initial_impute(X, K)
    h = cfg.bandwidth
    if h is None:
        h = solve_bandwidth(cfg.S, K, cfg.eta, X.n_rows)
    index = build_index(X0.values, h)
    mask = X.mask
    trace = ImputationTrace(index=index, mask=mask, K=K, eta=cfg.eta, h=h)
    trace.history.append(X0.values)
    trace.log_density_start = log_density_batch(index, X0.values)
    state = AdaHedgeState.fresh(K)
    x_prev = X0.values
    result = x_prev
    for t in range(1, cfg.max_iter + 1):
        alpha = adahedge_predict(state)
        ctx = make_context(index, x_prev, mask, K, cfg.eta)
        g, grad = eval_G_and_grad(ctx, alpha)
        x_t = imputed_matrix(ctx, alpha)
        loss = -grad
        adahedge_update(state, loss)
        trace.alphas.append(alpha)
        trace.g_values.append(g)
        trace.grads.append(grad)
        trace.loss_vectors.append(loss)
        trace.history.append(x_t)
        trace.final_t = t
        if g <= 0:
            trace.stop_reason = STOP_EARLY
            result = x_prev
            break
        x_prev = x_t
        result = x_t
    else:
        trace.stop_reason = STOP_BUDGET
    trace.log_density_end = log_density_batch(index, trace.history[-1])
    out = DataMatrix(result, mask)
    if cfg.normalize:
        out = l2_denormalize_rows(out, scales)
    return out, trace


def out_of_sample_impute(x_new, trained) -> np.ndarray:
    """Impute a new row with a fitted run: the initial KNN rule against the
    stored reference, then one improvement step with the final weights.

    `trained` is either an ImputationTrace or an (index, alpha, K) tuple.
    """
    if isinstance(trained, ImputationTrace):
        idx, alpha, K = trained.index, trained.alpha_final, trained.K
    else:
        idx, alpha, K = trained
    if isinstance(alpha, SimplexWeights):
        alpha = alpha.w
    x_new = np.asarray(x_new, dtype=np.float64)
    mask_row = ~np.isfinite(x_new)
    if not mask_row.any():
        return x_new.copy()
    ref = idx.reference
    obs = ~mask_row
    d2 = nan_sq_dists(
        x_new[None, :], obs[None, :], ref, np.ones_like(ref, dtype=bool)
    )[0]
    order = np.argsort(d2, kind="stable")[: min(K, ref.shape[0])]
    x0 = np.where(mask_row, ref[order].mean(axis=0), x_new)
    return impute_step(x0, mask_row, alpha, idx, K)
