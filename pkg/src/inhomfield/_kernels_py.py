"""Pure numpy versions of the hot loops; used when the extension is absent."""

import numpy as np


def add_torus_box_sum(noise, side, weight, out):
    """out[v] += weight * sum of noise[c] over corners c in v - [0, side)^2 (mod N)."""
    N = noise.shape[0]
    if side == 1:
        out += weight * noise
        return
    if side > N:
        raise ValueError("side exceeds torus")
    if side == N:
        out += weight * noise.sum()
        return
    p = np.concatenate([noise[N - side + 1:], noise], axis=0).cumsum(axis=0)
    rows = p[side - 1:].copy()
    rows[1:] -= p[:-side]
    q = np.concatenate([rows[:, N - side + 1:], rows], axis=1).cumsum(axis=1)
    box = q[:, side - 1:].copy()
    box[:, 1:] -= q[:, :-side]
    out += weight * box


def pair_in_range(xs, ys, lo2, hi2):
    """True if some pair of points has squared distance in [lo2, hi2]."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    for i in range(len(xs) - 1):
        d2 = (xs[i + 1:] - xs[i]) ** 2 + (ys[i + 1:] - ys[i]) ** 2
        if np.any((d2 >= lo2) & (d2 <= hi2)):
            return True
    return False


def tube_exit(traj, center, half, tmin, tmax):
    """Per row: does traj[t] - center[t] leave [-half[t], half[t]] for t in [tmin, tmax]."""
    if tmax < tmin:
        return np.zeros(traj.shape[0], dtype=bool)
    sl = slice(tmin, tmax + 1)
    dev = np.abs(traj[:, sl] - center[sl])
    return np.any(dev > half[sl], axis=1)


def max_subset_sums(samples, omega):
    """For each row of samples, max over index tuples in omega of the sum."""
    out = np.full(samples.shape[0], -np.inf)
    step = max(1, 2_000_000 // max(1, len(omega)))
    for a in range(0, samples.shape[0], step):
        block = samples[a:a + step]
        s = block[:, omega].sum(axis=2)
        out[a:a + step] = s.max(axis=1)
    return out
