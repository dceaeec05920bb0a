"""Shared data model: masked matrices, simplex weights, run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class GenerationFailureError(RuntimeError):
    """Raised when a missingness mechanism cannot satisfy the retention constraint."""


class DegenerateClusteringError(RuntimeError):
    """Raised when label clustering is attempted on fewer than 2 distinct points."""


class DegenerateLabelsError(ValueError):
    """Raised when classification is attempted with a single class."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces a non-finite intermediate."""


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs (e.g. empty mask)."""


def _as_float_matrix(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DataMatrix:
    """An N x F real matrix plus a boolean mask marking missing cells (True = missing).

    The mask, not the NaN sentinel, is authoritative: before imputation missing
    cells hold NaN, after imputation they hold finite values while the mask still
    records which cells were originally missing.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = _as_float_matrix(self.values)
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise InvalidArgumentError(
                f"mask shape {mask.shape} != values shape {values.shape}"
            )
        observed = values[~mask]
        if observed.size and not np.all(np.isfinite(observed)):
            raise InvalidArgumentError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    @classmethod
    def from_values(cls, values) -> "DataMatrix":
        """Build from a matrix where NaN marks missing cells."""
        values = _as_float_matrix(values)
        return cls(values, np.isnan(values))

    def masked_values(self) -> np.ndarray:
        """Copy of values with NaN at missing positions."""
        out = self.values.copy()
        out[self.mask] = np.nan
        return out

    def with_values(self, values) -> "DataMatrix":
        """Same mask, new values (used by imputers)."""
        return DataMatrix(_as_float_matrix(values), self.mask)


@dataclass(frozen=True)
class SimplexWeights:
    """Nonnegative length-K weight vector summing to 1."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise InvalidArgumentError("weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be finite")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidArgumentError(f"not on the simplex: {w!r}")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class GaussianParams:
    """Per-feature means and a shared standard deviation."""

    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if not np.all(np.isfinite(mu)):
            raise InvalidArgumentError("mu must be finite")
        if not (self.sigma > 0):
            raise InvalidArgumentError("sigma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class Config:
    """Hyperparameters of the iterative imputation loop."""

    n_neighbors: int = 5
    max_iter: int = 500
    eta: float = 0.001
    S: float = 1.0
    beta: float = 0.0
    normalize: bool = False
    seed: int = 0
    bandwidth: Optional[float] = None  # None -> solve_bandwidth default

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise InvalidArgumentError("n_neighbors must be >= 2")
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")
        if self.eta < 0:
            raise InvalidArgumentError("eta must be nonnegative")
        if not (self.S > 0):
            raise InvalidArgumentError("S must be positive")
        if not (self.eta < 4 * self.S**2 * self.n_neighbors):
            raise InvalidArgumentError("eta must satisfy eta < 4*S^2*K")
        if not (0 <= self.beta <= 1):
            raise InvalidArgumentError("beta must lie in [0, 1]")
        if self.bandwidth is not None and not (self.bandwidth > 0):
            raise InvalidArgumentError("bandwidth override must be positive")


def project_to_simplex(v) -> SimplexWeights:
    """Euclidean projection onto the probability simplex.

    Sort-based algorithm: with u = sort(v, descending), find the largest rho with
    u_rho + (1 - sum_{i<=rho} u_i)/rho > 0 and shift-clip at that threshold.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InvalidArgumentError("input must be a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("input must be finite")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho_candidates = u + (1.0 - css) / np.arange(1, v.size + 1) > 0
    rho = int(np.nonzero(rho_candidates)[0][-1])
    theta = (1.0 - css[rho]) / (rho + 1)
    w = np.maximum(v + theta, 0.0)
    # renormalize away the last-ulp drift so the simplex invariant holds exactly
    w /= w.sum()
    return SimplexWeights(w)


def l2_normalize_rows(X: DataMatrix):
    """Divide each row's observed entries by the row's l2 norm over observed entries.

    Returns the normalized matrix and the per-row scales; zero-norm rows are left
    unchanged with scale 1 so the transform is always invertible.
    """
    vals = X.masked_values()
    sq = np.where(X.mask, 0.0, np.nan_to_num(vals, nan=0.0) ** 2)
    norms = np.sqrt(sq.sum(axis=1))
    scales = np.where(norms > 0, norms, 1.0)
    out = vals / scales[:, None]
    return DataMatrix(np.where(X.mask, X.values, out), X.mask), scales


def l2_denormalize_rows(X: DataMatrix, scales) -> DataMatrix:
    """Inverse of l2_normalize_rows; rescales every entry (observed and imputed)."""
    scales = np.asarray(scales, dtype=np.float64)
    return DataMatrix(X.values * scales[:, None], X.mask)
