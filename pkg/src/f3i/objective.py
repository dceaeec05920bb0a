"""The distribution-preservation objective G, its derivatives in the mixing
weights alpha, the concavity bandwidth, and the telescoping identity.

G(alpha, X) = (1/N) sum_i log(D(x_i(alpha)) / D(x_i)) - eta * ||alpha||^2

where x_i(alpha) re-imputes the originally-missing coordinates of row i as a
convex combination of its K Chebyshev-nearest reference rows, and D is the
Gaussian-kernel density over a fixed reference set. All density ratios are
computed as differences of log-densities; softmax weights via log-sum-exp.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import InvalidArgumentError, NumericalError, SimplexWeights
from .neighbors import NeighborIndex, knn_chebyshev_batch, log_density_batch


@dataclass(frozen=True)
class ObjectiveContext:
    """Per-iteration cache: neighbor lists of the current matrix against the
    imputation reference, plus the density reference (identical for G, the
    ground-truth set for the oracle objective)."""

    impute_index: NeighborIndex   # neighbors and imputation values come from here
    density_index: NeighborIndex  # log-densities come from here
    X: np.ndarray                 # (N, F) current fully-imputed matrix
    mask: np.ndarray              # (N, F) bool, True = originally missing
    K: int
    eta: float
    neighbor_idx: np.ndarray      # (N, K)
    neighbor_vals: np.ndarray     # (N, K, F) reference rows of the neighbors
    masked_neighbor_vals: np.ndarray  # (N, K, F), zero at observed coordinates
    log_dens_X: np.ndarray        # (N,) log D(x_i) cached

    @property
    def h(self) -> float:
        return self.density_index.h


def make_context(
    impute_index: NeighborIndex,
    X: np.ndarray,
    mask: np.ndarray,
    K: int,
    eta: float,
    density_index: Optional[NeighborIndex] = None,
) -> ObjectiveContext:
    X = np.ascontiguousarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("context matrix must be fully imputed (finite)")
    if density_index is None:
        density_index = impute_index
    nn = knn_chebyshev_batch(impute_index, X, K)
    vals = impute_index.reference[nn]  # (N, K, F)
    masked_vals = vals * mask[:, None, :]
    log_dens = log_density_batch(density_index, X)
    return ObjectiveContext(
        impute_index, density_index, X, mask, int(K), float(eta),
        nn, vals, masked_vals, log_dens,
    )


def _alpha_vec(alpha, K: int) -> np.ndarray:
    a = alpha.w if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=np.float64)
    if a.shape != (K,):
        raise InvalidArgumentError(f"alpha must have length {K}")
    return a


def imputed_matrix(ctx: ObjectiveContext, alpha) -> np.ndarray:
    """X(alpha): each row's originally-missing coordinates replaced by the
    alpha-weighted combination of its cached neighbors."""
    a = _alpha_vec(alpha, ctx.K)
    combo = np.einsum("k,nkf->nf", a, ctx.neighbor_vals)
    return np.where(ctx.mask, combo, ctx.X)


def _density_stats(ctx: ObjectiveContext, Y: np.ndarray):
    """Log-densities of rows of Y plus softmax weights over the density reference."""
    ref = ctx.density_index.reference
    h = ctx.h
    lse, W = kernels.kernel_stats(Y, ref, 1.0 / (4.0 * h))
    f = ref.shape[1]
    log_dens = lse - np.log(ref.shape[0]) - f * (0.5 * np.log(2 * np.pi) + np.log(h))
    return log_dens, W


def eval_G(ctx: ObjectiveContext, alpha) -> float:
    a = _alpha_vec(alpha, ctx.K)
    Y = imputed_matrix(ctx, a)
    log_dens_Y = log_density_batch(ctx.density_index, Y)
    val = float(np.mean(log_dens_Y - ctx.log_dens_X) - ctx.eta * float(a @ a))
    if not np.isfinite(val):
        bad = int(np.nonzero(~np.isfinite(log_dens_Y - ctx.log_dens_X))[0][0])
        raise NumericalError(f"non-finite objective term at sample {bad}")
    return val


def grad_G(ctx: ObjectiveContext, alpha) -> np.ndarray:
    _, g = eval_G_and_grad(ctx, alpha)
    return g


def eval_G_and_grad(ctx: ObjectiveContext, alpha):
    """G and its analytic alpha-gradient, sharing one pass over the density.

    grad_k = -1/(2hN) sum_i (x_i(a) - sum_j w_ij z_j) . ztilde_ik - 2 eta a_k
    with w_ij the softmax of -||x_i(a) - z_j||^2/(4h) over the density reference.
    """
    a = _alpha_vec(alpha, ctx.K)
    Y = imputed_matrix(ctx, a)
    log_dens_Y, W = _density_stats(ctx, Y)
    diffs = log_dens_Y - ctx.log_dens_X
    if not np.all(np.isfinite(diffs)):
        bad = int(np.nonzero(~np.isfinite(diffs))[0][0])
        raise NumericalError(f"non-finite objective term at sample {bad}")
    val = float(np.mean(diffs) - ctx.eta * float(a @ a))
    h = ctx.h
    n = Y.shape[0]
    resid = Y - W @ ctx.density_index.reference  # (N, F): x_i(a) - weighted mean
    per_k = np.einsum("nkf,nf->nk", ctx.masked_neighbor_vals, resid)
    grad = -per_k.sum(axis=0) / (2.0 * h * n) - 2.0 * ctx.eta * a
    return val, grad


def hessian_G(ctx: ObjectiveContext, alpha) -> np.ndarray:
    """Exact K x K Hessian of G in alpha (validation only, never in the loop).

    Per sample, with r_j = x_i(a) - z_j, w_j the softmax weights, s = sum w_j r_j
    and P[k, j] = ztilde_k . r_j:
        block_i = (P diag(w) P^T - (P w)(P w)^T) / (4 h^2) - Ztilde^T Ztilde / (2h)
    and H = mean_i block_i - 2 eta I.
    """
    a = _alpha_vec(alpha, ctx.K)
    Y = imputed_matrix(ctx, a)
    _, W = _density_stats(ctx, Y)
    ref = ctx.density_index.reference
    h = ctx.h
    n = Y.shape[0]
    R = Y[:, None, :] - ref[None, :, :]                      # (N, N', F)
    P = np.einsum("nkf,njf->nkj", ctx.masked_neighbor_vals, R)  # (N, K, N')
    PW = np.einsum("nkj,nj->nk", P, W)                        # (N, K) = Ztilde^T s
    PWP = np.einsum("nkj,nj,nqj->nkq", P, W, P)               # (N, K, K)
    ZtZ = np.einsum("nkf,nqf->nkq", ctx.masked_neighbor_vals, ctx.masked_neighbor_vals)
    blocks = (PWP - PW[:, :, None] * PW[:, None, :]) / (4.0 * h * h) - ZtZ / (2.0 * h)
    H = blocks.sum(axis=0) / n - 2.0 * ctx.eta * np.eye(ctx.K)
    return 0.5 * (H + H.T)


def _cubic(h: float, b: float, c: float) -> float:
    return -2.0 * h**3 + b * h**2 + c


def solve_bandwidth(S: float, K: int, eta: float, N: int) -> float:
    """Smallest bandwidth guaranteeing strict concavity of G in alpha.

    Solves -2h^3 + b h^2 + c = 0 with b = (4 S^2 K - eta)/(2 K S), c = N^2 S / 4
    for its unique real root h0 > b/3 (Cardano closed form, bisection fallback).
    """
    if not (eta < 4 * S * S * K):
        raise InvalidArgumentError("requires eta < 4*S^2*K")
    if not (S > 0 and K >= 1 and N >= 1):
        raise InvalidArgumentError("S, K, N must be positive")
    b = (4.0 * S * S * K - eta) / (2.0 * K * S)
    c = N * N * S / 4.0
    # Depressed cubic via h = u + b/6 on h^3 - (b/2) h^2 - c/2 = 0:
    # u^3 + p u + q = 0 with p = -b^2/12, q = -(b^3/108 + c/2).
    p = -b * b / 12.0
    q = -(b**3 / 108.0 + c / 2.0)
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    h0 = None
    if disc > 0:
        sq = np.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        cand = float(u + b / 6.0)
        if cand > b / 3.0 and abs(_cubic(cand, b, c)) <= 1e-8 * max(1.0, abs(c)):
            h0 = cand
    if h0 is None:  # fallback: bracket and bisect (cubic is decreasing past b/3)
        lo, hi = b / 3.0, max(b, 1.0)
        while _cubic(hi, b, c) > 0:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _cubic(mid, b, c) > 0:
                lo = mid
            else:
                hi = mid
        h0 = hi
    # Guarantee strict negativity just past the root despite rounding.
    while _cubic(h0 * (1.0 + 1e-9), b, c) >= 0:
        h0 *= 1.0 + 1e-12
    return float(h0)


def telescope_residual(g_values, log_density_start, log_density_end, eta, alphas) -> float:
    """|LHS - RHS| of the telescoping identity over a completed run:

    sum_s G(alpha^s, X^{s-1}) = mean_i (log D(x_i^t) - log D(x_i^0))
                                - eta * sum_s ||alpha^s||^2
    """
    lhs = float(np.sum(g_values))
    reg = float(sum(float(np.dot(a, a)) for a in alphas))
    rhs = float(np.mean(np.asarray(log_density_end) - np.asarray(log_density_start))) - eta * reg
    return abs(lhs - rhs)
