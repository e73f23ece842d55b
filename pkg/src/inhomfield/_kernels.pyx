# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops; same contracts as the numpy fallback."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def add_torus_box_sum(double[:, ::1] noise, Py_ssize_t side, double weight,
                      double[:, ::1] out):
    cdef Py_ssize_t N = noise.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, tot
    if side > N:
        raise ValueError("side exceeds torus")
    if side == 1:
        for i in range(N):
            for j in range(N):
                out[i, j] += weight * noise[i, j]
        return
    if side == N:
        tot = 0.0
        for i in range(N):
            for j in range(N):
                tot += noise[i, j]
        for i in range(N):
            for j in range(N):
                out[i, j] += weight * tot
        return
    cdef double[:, ::1] rows = np.empty((N, N))
    cdef double[::1] run = np.zeros(N)
    cdef Py_ssize_t drop
    # running window down the columns, one contiguous row at a time
    for i in range(N - side + 1, N):
        for j in range(N):
            run[j] += noise[i, j]
    for i in range(N):
        drop = (i - side + 1 + N) % N
        for j in range(N):
            run[j] += noise[i, j]
            rows[i, j] = run[j]
            run[j] -= noise[drop, j]
    for i in range(N):
        acc = 0.0
        for j in range(N - side + 1, N):
            acc += rows[i, j]
        for j in range(N):
            acc += rows[i, j]
            out[i, j] += weight * acc
            acc -= rows[i, (j - side + 1 + N) % N]


def pair_in_range(xs, ys, long lo2, long hi2):
    cdef long[::1] x = np.ascontiguousarray(xs, dtype=np.int64)
    cdef long[::1] y = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef long dx, dy, d2
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            d2 = dx * dx + dy * dy
            if lo2 <= d2 <= hi2:
                return True
    return False


def tube_exit(traj, center, half, Py_ssize_t tmin, Py_ssize_t tmax):
    cdef double[:, ::1] tr = np.ascontiguousarray(traj, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(center, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(half, dtype=np.float64)
    cdef Py_ssize_t P = tr.shape[0], p, t
    out = np.zeros(P, dtype=bool)
    cdef cnp.uint8_t[::1] o = out.view(np.uint8)
    cdef double d
    for p in range(P):
        for t in range(tmin, tmax + 1):
            d = tr[p, t] - c[t]
            if d > h[t] or d < -h[t]:
                o[p] = 1
                break
    return out


def max_subset_sums(samples, omega):
    cdef double[:, ::1] s = np.ascontiguousarray(samples, dtype=np.float64)
    cdef long[:, ::1] om = np.ascontiguousarray(omega, dtype=np.int64)
    cdef Py_ssize_t R = s.shape[0], S = om.shape[0], m = om.shape[1]
    cdef Py_ssize_t r, a, b
    cdef double best, tot
    out = np.empty(R)
    cdef double[::1] o = out
    for r in range(R):
        best = -1e300
        for a in range(S):
            tot = 0.0
            for b in range(m):
                tot += s[r, om[a, b]]
            if tot > best:
                best = tot
        o[r] = best
    return out
