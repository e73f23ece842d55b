"""Small statistical helpers shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import NumericError

Z95 = float(sps.norm.ppf(0.975))


def wilson_interval(k, n, z: float = Z95):
    """Wilson score interval for a binomial proportion; vectorized."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    p = np.where(n > 0, k / np.maximum(n, 1), 0.0)
    denom = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # rounding can push an endpoint past p at k = 0 or k = n
    lo = np.clip(np.minimum(mid - half, p), 0.0, 1.0)
    return p, lo, np.clip(np.maximum(mid + half, p), 0.0, 1.0)


@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_se: float
    ci: tuple[float, float]


def weighted_line(x, y, w=None, z: float = Z95) -> LinearFit:
    """Weighted least squares y = a + b x with weights = inverse variances."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    w = np.ones_like(x) if w is None else np.asarray(w, float)
    if len(x) < 2:
        raise ValueError("need at least two points for a line")
    X = np.stack([np.ones_like(x), x], axis=1)
    XtW = X.T * w
    try:
        cov = np.linalg.inv(XtW @ X)
    except np.linalg.LinAlgError as exc:
        raise NumericError("degenerate design: abscissae coincide") from exc
    a, b = cov @ (XtW @ y)
    se = math.sqrt(cov[1, 1])
    return LinearFit(float(b), float(a), se, (float(b - z * se), float(b + z * se)))


def cov_se(C_uu, C_vv, C_uv, count: int):
    """Standard error of an empirical covariance of Gaussian coordinates."""
    return np.sqrt((np.asarray(C_uu) * C_vv + np.asarray(C_uv) ** 2) / count)


def empirical_cov(X: np.ndarray) -> np.ndarray:
    """Second-moment matrix of zero-mean rows (the mean is known to be zero)."""
    X = np.asarray(X, dtype=float)
    return X.T @ X / X.shape[0]


def ks_statistic(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    # only the statistic is used; skip the exact p-value computation
    return float(sps.ks_2samp(a, b, method="asymp").statistic)
