"""AdaHedge: parameter-free exponential-weights learner over the K-simplex.

The learning rate is ln(K)/Delta where Delta accumulates the per-round
mixability gap (hedge loss minus mix loss); Delta = 0 is treated as an
infinite learning rate (uniform play over the argmin of cumulative loss).
Losses may be negative. Each incoming loss vector is centered by its minimum
before accumulation — predictions and gaps are translation invariant, so this
changes nothing semantically while keeping the state well-scaled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import InvalidArgumentError


@dataclass
class AdaHedgeState:
    cum_loss: np.ndarray  # centered cumulative loss vector
    cum_gap: float = 0.0
    t: int = 0

    @classmethod
    def fresh(cls, K: int) -> "AdaHedgeState":
        if K < 1:
            raise InvalidArgumentError("need at least one expert")
        return cls(np.zeros(K, dtype=np.float64))


def adahedge_predict(state: AdaHedgeState) -> np.ndarray:
    L = state.cum_loss
    m = L.min()
    if state.cum_gap <= 0.0 or len(L) == 1:
        w = (L == m).astype(np.float64)
        return w / w.sum()
    eta = np.log(len(L)) / state.cum_gap
    w = np.exp(-eta * (L - m))
    return w / w.sum()


def adahedge_update(state: AdaHedgeState, loss) -> AdaHedgeState:
    loss = np.asarray(loss, dtype=np.float64)
    if loss.shape != state.cum_loss.shape:
        raise InvalidArgumentError("loss vector has wrong length")
    if not np.all(np.isfinite(loss)):
        raise InvalidArgumentError("loss vector must be finite")
    w = adahedge_predict(state)
    lc = loss - loss.min()  # translation-invariant centering
    hedge = float(w @ lc)
    L = state.cum_loss
    if state.cum_gap <= 0.0 or len(L) == 1:
        mix = float((L + lc).min() - L.min())
    else:
        eta = np.log(len(L)) / state.cum_gap
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        z = logw - eta * lc
        zmax = z.max()
        mix = float(-(zmax + np.log(np.sum(np.exp(z - zmax)))) / eta)
    gap = max(0.0, hedge - mix)
    state.cum_gap += gap
    state.cum_loss = L + lc
    state.t += 1
    return state


def adahedge_regret_bound(delta_t: float, t: int, K: int) -> float:
    """Worst-case regret bound after t rounds when every loss vector has
    coordinate range at most delta_t: 2 d sqrt(t ln K) + 16 d (2 + ln(K)/3)."""
    if delta_t < 0:
        raise InvalidArgumentError("delta_t must be nonnegative")
    if t < 1:
        raise InvalidArgumentError("t must be >= 1")
    logk = np.log(K)
    return float(2.0 * delta_t * np.sqrt(t * logk) + 16.0 * delta_t * (2.0 + logk / 3.0))
