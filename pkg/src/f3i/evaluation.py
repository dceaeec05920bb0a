"""Imputation metrics, cumulative regret with a projected-gradient oracle,
and the closed-form theoretical bound constants."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import (
    DataMatrix,
    InvalidArgumentError,
    UndefinedMetricError,
    project_to_simplex,
)
from .imputer import ImputationTrace
from .joint import SigmoidClassifier, batch_logloss
from .learner import adahedge_regret_bound
from .neighbors import build_index
from .objective import eval_G, eval_G_and_grad, imputed_matrix, make_context


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)


def mse(X_imp, X_star) -> float:
    a, b = _values(X_imp), _values(X_star)
    if a.shape != b.shape:
        raise InvalidArgumentError("shape mismatch")
    return float(np.mean((a - b) ** 2))


def rmse(X_imp, X_star) -> float:
    return float(np.sqrt(mse(X_imp, X_star)))


def masked_mse(X_imp, X_star, mask) -> float:
    """Per-row mean squared gap over missing cells only, averaged over the
    rows that have at least one missing cell."""
    a, b = _values(X_imp), _values(X_star)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape:
        raise InvalidArgumentError("shape mismatch")
    counts = mask.sum(axis=1)
    rows = counts > 0
    if not rows.any():
        raise UndefinedMetricError("mask has no missing cells")
    sq = np.where(mask, (a - b) ** 2, 0.0).sum(axis=1)
    return float(np.mean(sq[rows] / counts[rows]))


@dataclass(frozen=True)
class BoundConstants:
    sigma2: float
    sigma_gsm: float
    sigma_miss: float
    c_miss: Optional[float] = None
    delta_t: Optional[float] = None
    adahedge_term: Optional[float] = None
    bound_value: Optional[float] = None


def sigma_miss(sigma: float, K: int) -> BoundConstants:
    """Subgaussian scales: sigma2 = sigma sqrt(1 + 1/K) for the imputation
    residual, sigma_gsm = sigma sqrt((K+3)/(3K)) for self-masked entries,
    sigma_miss = max of the two."""
    if not (sigma > 0) or K < 2:
        raise InvalidArgumentError("need sigma > 0 and K >= 2")
    s2 = sigma * np.sqrt(1.0 + 1.0 / K)
    sg = sigma * np.sqrt((K + 3.0) / (3.0 * K))
    return BoundConstants(float(s2), float(sg), float(max(s2, sg)))


def c_miss(sigma_miss_value: float, F: int, delta: float) -> float:
    """Concentration constant: s^2 F + 2 ln(1/d) (1 + sqrt(1 + 8 s^2 F / ln(1/d)))."""
    if not (0 < delta < 1):
        raise InvalidArgumentError("delta must lie in (0, 1)")
    s2f = sigma_miss_value**2 * F
    ld = np.log(1.0 / delta)
    return float(s2f + 2.0 * ld * (1.0 + np.sqrt(1.0 + 8.0 * s2f / ld)))


class TraceObjective:
    """Callable summed objective over a stored run: alpha -> sum_s O(alpha, X^{s-1}).

    O is the distribution-preservation objective with densities over
    `density_ref` (the imputation reference itself by default, the ground
    truth for the oracle variant). With a classifier attached the objective
    becomes the joint blend (1-beta) G - (beta/N) sum_i loss_i.
    """

    def __init__(self, trace: ImputationTrace, density_ref=None,
                 clf: Optional[SigmoidClassifier] = None,
                 labels=None, beta: float = 0.0, loss_variant: str = "paper_logloss"):
        if density_ref is None:
            density_index = trace.index
        else:
            density_index = build_index(_values(density_ref), trace.h)
        self.ctxs = [
            make_context(trace.index, Xs, trace.mask, trace.K, trace.eta, density_index)
            for Xs in trace.history[: trace.final_t]
        ]
        self.clf = clf
        self.labels = None if labels is None else np.asarray(labels, dtype=np.float64)
        self.beta = float(beta)
        self.loss_variant = loss_variant
        self.K = trace.K

    def _step_value(self, ctx, alpha) -> float:
        g = eval_G(ctx, alpha)
        if self.clf is None or self.beta == 0:
            return g
        Y = imputed_matrix(ctx, alpha)
        ell = float(np.mean(batch_logloss(self.clf, Y, self.labels, self.loss_variant)))
        return (1.0 - self.beta) * g - self.beta * ell

    def _step_grad(self, ctx, alpha) -> np.ndarray:
        _, g_G = eval_G_and_grad(ctx, alpha)
        if self.clf is None or self.beta == 0:
            return g_G
        Y = imputed_matrix(ctx, alpha)
        p = self.clf.predict_proba(Y)
        y = self.labels
        if self.loss_variant == "full_bce":
            coef = p - y
        else:
            coef = -y * (1.0 - p)
        ztw = np.einsum("nkf,f->nk", ctx.masked_neighbor_vals, self.clf.omega)
        g_l = (coef[:, None] * ztw).mean(axis=0)
        return (1.0 - self.beta) * g_G - self.beta * g_l

    def value(self, alpha) -> float:
        return float(sum(self._step_value(c, alpha) for c in self.ctxs))

    def grad(self, alpha) -> np.ndarray:
        return np.sum([self._step_grad(c, alpha) for c in self.ctxs], axis=0)

    def realized_value(self, alphas: Sequence[np.ndarray]) -> float:
        return float(
            sum(self._step_value(c, a) for c, a in zip(self.ctxs, alphas))
        )


def regret_oracle(evaluator: TraceObjective, K: int,
                  floors: Optional[List[np.ndarray]] = None,
                  tol: float = 1e-8, max_iter: int = 10_000):
    """Maximize the summed objective over the simplex by projected gradient
    ascent with backtracking line search. Returns (alpha_star, value,
    converged); the value is floored at uniform play and at every supplied
    recorded alpha."""
    a = np.full(K, 1.0 / K)
    fa = evaluator.value(a)
    best_a, best_v = a.copy(), fa
    for cand in floors or []:
        v = evaluator.value(cand)
        if v > best_v:
            best_a, best_v = np.asarray(cand, dtype=np.float64).copy(), v
    converged = False
    step = 1.0
    for _ in range(max_iter):
        g = evaluator.grad(a)
        pg = project_to_simplex(a + g).w - a
        if float(np.linalg.norm(pg)) <= tol:
            converged = True
            break
        s = step
        cand, fc = a, fa
        while s >= 1e-14:
            cand = project_to_simplex(a + s * g).w
            fc = evaluator.value(cand)
            if fc >= fa + 1e-4 * float(g @ (cand - a)):
                break
            s *= 0.5
        if fc <= fa + 1e-15 * max(1.0, abs(fa)):
            converged = True  # line search exhausted: stationary to precision
            break
        a, fa = cand, fc
        step = min(s * 2.0, 1e6)
        if fa > best_v:
            best_a, best_v = a.copy(), fa
    if fa > best_v:
        best_a, best_v = a.copy(), fa
    return best_a, float(best_v), converged


def cumulative_regret(trace: ImputationTrace, evaluator: TraceObjective) -> float:
    """max over the simplex of the summed objective, minus its value along the
    weights actually played."""
    _, oracle_value, _ = regret_oracle(evaluator, trace.K, floors=list(trace.alphas))
    return float(oracle_value - evaluator.realized_value(trace.alphas))


def _delta_t(vectors: Sequence[np.ndarray]) -> float:
    return max((float(np.max(v) - np.min(v)) for v in vectors), default=0.0)


def thm44_bound(trace: ImputationTrace, sigma: float) -> float:
    """Closed-form regret bound for a pure imputation run: the AdaHedge term on
    the observed gradient ranges plus (C_miss / h) per round, with the
    concentration constant at confidence delta = 1/N^3."""
    t = trace.final_t
    if t == 0:
        return 0.0
    n, f = trace.mask.shape
    consts = sigma_miss(sigma, trace.K)
    cm = c_miss(consts.sigma_miss, f, n**-3.0)
    dt = _delta_t(trace.grads)
    return adahedge_regret_bound(dt, t, trace.K) + (cm / trace.h) * t


def thm51_bound(trace: ImputationTrace, sigma: float, beta: float) -> float:
    """Joint-run variant: AdaHedge term on the surgery-corrected learner losses
    and the linear term scaled by (1 - beta)."""
    t = trace.final_t
    if t == 0:
        return 0.0
    n, f = trace.mask.shape
    consts = sigma_miss(sigma, trace.K)
    cm = c_miss(consts.sigma_miss, f, n**-3.0)
    dt = _delta_t(trace.loss_vectors)
    return adahedge_regret_bound(dt, t, trace.K) + (1.0 - beta) * (cm / trace.h) * t


def bound_constants(trace: ImputationTrace, sigma: float,
                    beta: Optional[float] = None) -> BoundConstants:
    """Full bound record for reporting."""
    n, f = trace.mask.shape
    consts = sigma_miss(sigma, trace.K)
    cm = c_miss(consts.sigma_miss, f, n**-3.0)
    if beta is None:
        dt = _delta_t(trace.grads)
        bound = thm44_bound(trace, sigma)
    else:
        dt = _delta_t(trace.loss_vectors)
        bound = thm51_bound(trace, sigma, beta)
    ah = adahedge_regret_bound(dt, trace.final_t, trace.K) if trace.final_t else 0.0
    return BoundConstants(consts.sigma2, consts.sigma_gsm, consts.sigma_miss,
                          cm, dt, ah, bound)


def auc_score(y_true, scores) -> float:
    """Area under the ROC curve via the rank-statistic formulation with
    midrank tie handling."""
    y = np.asarray(y_true, dtype=np.float64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise InvalidArgumentError("labels and scores must align")
    n1 = float(np.sum(y == 1))
    n0 = float(np.sum(y == 0))
    if n0 == 0 or n1 == 0:
        raise UndefinedMetricError("AUC needs both classes")
    r = rankdata(s)
    u = float(r[y == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n0 * n1)
