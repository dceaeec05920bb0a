"""Joint imputation + binary classification: sigmoid classifier, log loss,
gradient surgery between the two task gradients, and the joint training loop.

Per epoch the imputation loop runs at fixed classifier parameters, charging
the online learner a surgery-corrected blend of the two task gradients; the
classifier is then updated by one full-batch gradient-descent pass on the
currently imputed matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    Config,
    DataMatrix,
    DegenerateLabelsError,
    InvalidArgumentError,
    SimplexWeights,
)
from .imputer import (
    STOP_BUDGET,
    STOP_EARLY,
    ImputationTrace,
    impute_step,
    knn_initial_impute,
)
from .learner import AdaHedgeState, adahedge_predict, adahedge_update
from .neighbors import NeighborIndex, build_index, knn_chebyshev, log_density_batch
from .objective import (
    ObjectiveContext,
    eval_G_and_grad,
    imputed_matrix,
    make_context,
    solve_bandwidth,
)
from .synthgen import sigmoid

PAPER_LOGLOSS = "paper_logloss"
FULL_BCE = "full_bce"


@dataclass
class SigmoidClassifier:
    omega: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if not (np.all(np.isfinite(self.omega)) and np.isfinite(self.bias)):
            raise InvalidArgumentError("classifier parameters must be finite")

    def logits(self, X: np.ndarray) -> np.ndarray:
        return X @ self.omega + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(X))


@dataclass(frozen=True)
class JointConfig:
    beta: float = 0.5
    epochs: int = 5
    classifier_lr: float = 1.0
    loss_variant: str = FULL_BCE

    def __post_init__(self):
        if not (0 <= self.beta <= 1):
            raise InvalidArgumentError("beta must lie in [0, 1]")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if not (self.classifier_lr > 0):
            raise InvalidArgumentError("classifier_lr must be positive")
        if self.loss_variant not in (PAPER_LOGLOSS, FULL_BCE):
            raise InvalidArgumentError(f"unknown loss variant {self.loss_variant!r}")


def _stable_log_sigmoid(z: np.ndarray) -> np.ndarray:
    # log(sigmoid(z)) = -log(1 + exp(-z)), computed without overflow
    return -np.logaddexp(0.0, -z)


def logloss(clf: SigmoidClassifier, x, y: int, variant: str = PAPER_LOGLOSS) -> float:
    """Pointwise log loss of the sigmoid classifier. The paper_logloss variant
    keeps only the positive-class term -y log C(x); full_bce adds the usual
    -(1-y) log(1 - C(x))."""
    z = float(np.dot(np.asarray(x, dtype=np.float64), clf.omega) + clf.bias)
    val = -y * _stable_log_sigmoid(np.array(z))
    if variant == FULL_BCE:
        val = val - (1 - y) * _stable_log_sigmoid(np.array(-z))
    return float(val)


def batch_logloss(clf: SigmoidClassifier, X: np.ndarray, y: np.ndarray,
                  variant: str = PAPER_LOGLOSS) -> np.ndarray:
    z = clf.logits(X)
    out = -y * _stable_log_sigmoid(z)
    if variant == FULL_BCE:
        out = out - (1 - y) * _stable_log_sigmoid(-z)
    return out


def grad_loss_alpha(clf: SigmoidClassifier, x_prev, mask_row, alpha,
                    idx: NeighborIndex, K: int, y: int,
                    variant: str = PAPER_LOGLOSS) -> np.ndarray:
    """Gradient in alpha of the pointwise log loss after one imputation step.

    paper_logloss: -y (1 - C(x(alpha))) * (Ztilde^T omega);
    full_bce:      (C(x(alpha)) - y)    * (Ztilde^T omega).
    """
    x_prev = np.asarray(x_prev, dtype=np.float64)
    mask_row = np.asarray(mask_row, dtype=bool)
    a = alpha.w if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=np.float64)
    nn = knn_chebyshev(idx, x_prev, K)
    zt = idx.reference[nn] * mask_row[None, :]  # (K, F) masked neighbor rows
    x_alpha = np.where(mask_row, a @ idx.reference[nn], x_prev)
    p = float(sigmoid(np.dot(x_alpha, clf.omega) + clf.bias))
    coef = (p - y) if variant == FULL_BCE else -y * (1.0 - p)
    return coef * (zt @ clf.omega)


def _batch_grad_loss_alpha(ctx: ObjectiveContext, clf: SigmoidClassifier,
                           alpha: np.ndarray, y: np.ndarray, variant: str) -> np.ndarray:
    """(1/N) sum_i grad_alpha loss_i using the context's cached neighbors."""
    Y = imputed_matrix(ctx, alpha)
    p = clf.predict_proba(Y)
    coef = (p - y) if variant == FULL_BCE else -y * (1.0 - p)
    ztw = np.einsum("nkf,f->nk", ctx.masked_neighbor_vals, clf.omega)
    return (coef[:, None] * ztw).mean(axis=0)


def pcgrad_pair(g1, g2, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient surgery for two tasks: when the gradients conflict (negative
    dot product) each is projected off the other's ORIGINAL direction. Task
    order is randomized (one coin per call); with originals used on both sides
    the result is order-independent, but the draw follows the cited procedure.
    """
    g1 = np.asarray(g1, dtype=np.float64).copy()
    g2 = np.asarray(g2, dtype=np.float64).copy()
    if g1.shape != g2.shape:
        raise InvalidArgumentError("gradients must have equal length")
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise InvalidArgumentError("gradients must be finite")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    order = (0, 1) if rng.random() < 0.5 else (1, 0)
    orig = (g1.copy(), g2.copy())
    out = [g1, g2]
    dot = float(orig[0] @ orig[1])
    if dot < 0:
        for i in order:
            other = orig[1 - i]
            denom = float(other @ other)
            if denom > 0:  # zero-vector guard: skip the projection
                out[i] = out[i] - (float(orig[i] @ other) / denom) * other
    return out[0], out[1]


def pcgrad_learner_loss(ctx: ObjectiveContext, clf: SigmoidClassifier,
                        alpha, labels: np.ndarray, beta: float, rng,
                        variant: str = PAPER_LOGLOSS,
                        g_G: Optional[np.ndarray] = None) -> np.ndarray:
    """Surgery-corrected blend L of the two task gradients (both taken as
    ascent directions: the objective gradient and the negated mean loss
    gradient); the learner is then charged -L so its realized loss is
    -<alpha, L>. beta=0 and beta=1 bypass surgery entirely (single task)."""
    a = alpha.w if isinstance(alpha, SimplexWeights) else np.asarray(alpha, dtype=np.float64)
    if g_G is None:
        _, g_G = eval_G_and_grad(ctx, a)
    if beta == 0:
        return g_G
    g_l = _batch_grad_loss_alpha(ctx, clf, a, labels, variant)
    if beta == 1:
        return -g_l
    g1, g2 = pcgrad_pair(g_G, -g_l, rng)
    return (1.0 - beta) * g1 + beta * g2


@dataclass
class JointEpochRecord:
    trace: ImputationTrace
    omega: np.ndarray                 # classifier after this epoch's update
    bias: float
    omega_before: np.ndarray = None   # classifier held fixed during the loop
    bias_before: float = 0.0
    heldout_auc: Optional[float] = None


@dataclass
class JointTrace:
    epochs: List[JointEpochRecord] = field(default_factory=list)

    @property
    def final(self) -> JointEpochRecord:
        return self.epochs[-1]


def _classifier_grad(clf: SigmoidClassifier, X: np.ndarray, y: np.ndarray,
                     variant: str) -> Tuple[np.ndarray, float]:
    p = clf.predict_proba(X)
    coef = (p - y) if variant == FULL_BCE else -y * (1.0 - p)
    return (coef[:, None] * X).mean(axis=0), float(coef.mean())


def pcgrad_f3i_run(
    X: DataMatrix,
    labels,
    cfg: Config,
    jcfg: JointConfig,
    heldout: Optional[Tuple[DataMatrix, np.ndarray]] = None,
) -> Tuple[DataMatrix, SigmoidClassifier, JointTrace]:
    """Joint loop: per epoch, (a) the imputation loop with the surgery-blended
    learner loss at fixed classifier parameters, (b) one full-batch gradient
    step on the classifier over the imputed matrix. Early stopping on the
    objective applies only in the beta=0 reduction (where the loop must match
    the pure imputation run exactly); with an active downstream task every
    epoch runs its full budget."""
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if labels.shape[0] != X.n_rows:
        raise InvalidArgumentError("labels length must match number of rows")
    classes = np.unique(labels)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise InvalidArgumentError("labels must be binary 0/1")
    if classes.size < 2:
        raise DegenerateLabelsError("need both classes present")
    beta = jcfg.beta
    K = cfg.n_neighbors
    X0 = knn_initial_impute(X, K)
    h = cfg.bandwidth
    if h is None:
        h = solve_bandwidth(cfg.S, K, cfg.eta, X.n_rows)
    index = build_index(X0.values, h)
    mask = X.mask
    rng = np.random.default_rng(cfg.seed)
    clf = SigmoidClassifier(np.zeros(X.n_cols), 0.0)
    trace = JointTrace()
    result = X0.values
    for _epoch in range(jcfg.epochs):
        state = AdaHedgeState.fresh(K)
        ep_trace = ImputationTrace(index=index, mask=mask, K=K, eta=cfg.eta, h=h)
        ep_trace.history.append(X0.values)
        ep_trace.log_density_start = log_density_batch(index, X0.values)
        x_prev = X0.values
        result = x_prev
        for t in range(1, cfg.max_iter + 1):
            alpha = adahedge_predict(state)
            ctx = make_context(index, x_prev, mask, K, cfg.eta)
            g, g_G = eval_G_and_grad(ctx, alpha)
            L = pcgrad_learner_loss(ctx, clf, alpha, labels, beta, rng,
                                    jcfg.loss_variant, g_G=g_G)
            x_t = imputed_matrix(ctx, alpha)
            adahedge_update(state, -L)
            ep_trace.alphas.append(alpha)
            ep_trace.g_values.append(g)
            ep_trace.grads.append(g_G)
            ep_trace.loss_vectors.append(-L)
            ep_trace.history.append(x_t)
            ep_trace.final_t = t
            if beta == 0 and g <= 0:
                ep_trace.stop_reason = STOP_EARLY
                result = x_prev
                break
            x_prev = x_t
            result = x_t
        else:
            ep_trace.stop_reason = STOP_BUDGET
        ep_trace.log_density_end = log_density_batch(index, ep_trace.history[-1])
        omega_before, bias_before = clf.omega.copy(), clf.bias
        # (b) one full-batch classifier pass on the imputed matrix
        grad_w, grad_b = _classifier_grad(clf, result, labels, jcfg.loss_variant)
        clf = SigmoidClassifier(clf.omega - jcfg.classifier_lr * grad_w,
                                clf.bias - jcfg.classifier_lr * grad_b)
        rec = JointEpochRecord(ep_trace, clf.omega.copy(), clf.bias,
                               omega_before, bias_before)
        if heldout is not None:
            rec.heldout_auc = _heldout_auc(clf, ep_trace, heldout)
        trace.epochs.append(rec)
    return DataMatrix(result, mask), clf, trace


def _heldout_auc(clf: SigmoidClassifier, ep_trace: ImputationTrace,
                 heldout: Tuple[DataMatrix, np.ndarray]) -> float:
    from .evaluation import auc_score
    from .imputer import out_of_sample_impute

    Xh, yh = heldout
    rows = Xh.masked_values()
    imputed = np.vstack([out_of_sample_impute(r, ep_trace) for r in rows])
    return auc_score(np.asarray(yh), clf.logits(imputed))
