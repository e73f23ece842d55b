"""Shared oracles for the Monte Carlo law checks."""

import numpy as np


def preregistered_entries(N: int, interior_only: bool = True) -> list[tuple[int, int]]:
    """Fixed vertex pairs: a diagonal sample plus lags from the center.

    Chosen before any sampling so that the 4-SE rule is applied to a small,
    fixed family instead of the full matrix.
    """
    lo = 1 if interior_only else 0
    hi = N - 1 if interior_only else N
    c = N // 2
    idx = lambda x, y: x * N + y
    step = max(1, (hi - lo) // 3)
    diag = [idx(x, y) for x in range(lo, hi, step) for y in range(lo, hi, step)]
    ent = [(i, i) for i in diag]
    for lag in (1, 2, 3):
        if c + lag < hi:
            ent += [(idx(c, c), idx(c + lag, c)), (idx(c, c), idx(c, c + lag)),
                    (idx(c, c), idx(c + lag, c + lag))]
    return ent


def max_z(samples: np.ndarray, cov: np.ndarray, entries) -> float:
    """Largest |empirical - exact| / SE over the given entries (zero mean)."""
    X = samples.reshape(len(samples), -1)
    R = len(X)
    out = 0.0
    for u, v in entries:
        emp = float(X[:, u] @ X[:, v]) / R
        se = np.sqrt((cov[u, u] * cov[v, v] + cov[u, v] ** 2) / R)
        if se == 0:
            assert emp == cov[u, v] == 0
            continue
        out = max(out, abs(emp - cov[u, v]) / se)
    return out
