"""Shared fixtures and brute-force reference implementations used as oracles."""
import numpy as np
import pytest

from f3i.core import DataMatrix


def random_masked_matrix(rng, n=20, f=5, p_miss=0.25, scale=1.0):
    """Random complete matrix with an entrywise mask, keeping >= 2 observed
    entries per column (the generator contract all imputers assume)."""
    vals = rng.normal(0.0, scale, size=(n, f))
    while True:
        mask = rng.random((n, f)) < p_miss
        if ((~mask).sum(axis=0) >= 2).all():
            break
    out = vals.copy()
    out[mask] = np.nan
    return DataMatrix(out, mask), vals


def random_simplex(rng, k):
    w = rng.exponential(size=k)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Brute-force oracles (straight-line, no shared code with the package)
# ---------------------------------------------------------------------------

def brute_knn_chebyshev(Z, x, K):
    d = np.max(np.abs(Z - x[None, :]), axis=1)
    order = sorted(range(Z.shape[0]), key=lambda j: (d[j], j))
    return np.array(order[:K])


def brute_log_density(Z, x, h):
    """Extended-precision direct summation of the Gaussian-kernel density."""
    import mpmath

    mpmath.mp.dps = 60
    total = mpmath.mpf(0)
    n, f = Z.shape
    for j in range(n):
        sq = mpmath.mpf(0)
        for c in range(f):
            sq += (mpmath.mpf(x[c]) - mpmath.mpf(Z[j, c])) ** 2
        total += mpmath.e ** (-sq / (4 * mpmath.mpf(h)))
    log_norm = f * (mpmath.log(mpmath.sqrt(2 * mpmath.pi)) + mpmath.log(mpmath.mpf(h)))
    return float(mpmath.log(total / n) - log_norm)


def brute_log_density_np(Z, x, h):
    """Plain float64 direct summation (for instances too large for mpmath)."""
    sq = ((Z - x[None, :]) ** 2).sum(axis=1)
    m = (-sq / (4 * h)).max()
    s = np.exp(-sq / (4 * h) - m).sum()
    f = Z.shape[1]
    return float(m + np.log(s) - np.log(Z.shape[0])
                 - f * (0.5 * np.log(2 * np.pi) + np.log(h)))


def brute_nan_euclid_sq(a_vals, a_obs, b_vals, b_obs, F):
    common = a_obs & b_obs
    if not common.any():
        return np.inf
    diff = a_vals[common] - b_vals[common]
    return F * float(diff @ diff) / int(common.sum())


def brute_knn_impute(X: DataMatrix, K, weighting="uniform"):
    """Per-cell KNN imputation, one query row at a time."""
    vals, mask = X.values, X.mask
    n, f = vals.shape
    out = vals.copy()
    for i in range(n):
        for c in range(f):
            if not mask[i, c]:
                continue
            donors = [j for j in range(n) if not mask[j, c]]
            d2 = [
                brute_nan_euclid_sq(vals[i], ~mask[i], vals[j], ~mask[j], f)
                for j in donors
            ]
            order = sorted(range(len(donors)), key=lambda t: (d2[t], donors[t]))
            kf = min(K, len(donors))
            chosen = order[:kf]
            v = np.array([vals[donors[t], c] for t in chosen])
            if weighting == "uniform":
                out[i, c] = v.mean()
            else:
                d = np.sqrt(np.array([d2[t] for t in chosen]))
                if (d == 0).any():
                    w = (d == 0).astype(float)
                elif not np.isfinite(d).any():
                    w = np.ones_like(d)
                else:
                    w = 1.0 / d
                    w[~np.isfinite(w)] = 0.0
                    if w.sum() == 0:
                        w = np.ones_like(d)
                w = w / w.sum()
                out[i, c] = float(w @ v)
    return out


def brute_project_simplex(v, grid=2001):
    """Dense grid search for the Euclidean projection onto the 2- or 3-simplex."""
    v = np.asarray(v, dtype=float)
    k = v.size
    best, best_d = None, np.inf
    ts = np.linspace(0.0, 1.0, grid)
    if k == 2:
        for a in ts:
            w = np.array([a, 1 - a])
            d = float(((w - v) ** 2).sum())
            if d < best_d:
                best, best_d = w, d
    elif k == 3:
        for a in ts[::10]:
            for b in ts[::10]:
                if a + b > 1:
                    continue
                w = np.array([a, b, 1 - a - b])
                d = float(((w - v) ** 2).sum())
                if d < best_d:
                    best, best_d = w, d
    else:
        raise ValueError("grid oracle supports K in {2, 3}")
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
