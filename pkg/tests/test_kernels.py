import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inhomfield import _kernels_py as kpy
from inhomfield import kernels

try:
    from inhomfield import _kernels as kcy
except ImportError:  # extension not built
    kcy = None

needs_ext = pytest.mark.skipif(kcy is None, reason="compiled kernels unavailable")


def _box_sum_loop(noise, side):
    N = noise.shape[0]
    out = np.zeros_like(noise)
    for x, y in itertools.product(range(N), repeat=2):
        out[x, y] = sum(noise[(x - i) % N, (y - j) % N] for i in range(side) for j in range(side))
    return out


@pytest.mark.parametrize("side", [1, 2, 3, 8])
def test_box_sum_against_loop(side, rng):
    noise = rng.standard_normal((8, 8))
    out = np.zeros_like(noise)
    kernels.add_torus_box_sum(noise, side, 2.0, out)
    assert np.allclose(out, 2.0 * _box_sum_loop(noise, side))


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@needs_ext
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 8, 16]), st.integers(1, 16))
def test_box_sum_backends_agree(seed, N, side):
    side = min(side, N)
    noise = np.random.default_rng(seed).standard_normal((N, N))
    a, b = np.zeros_like(noise), np.zeros_like(noise)
    kpy.add_torus_box_sum(noise, side, 0.7, a)
    kcy.add_torus_box_sum(noise, side, 0.7, b)
    assert np.allclose(a, b)


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=25),
       st.integers(0, 50), st.integers(0, 80))
def test_pair_in_range_brute(pts, lo2, width):
    xs = np.array([p[0] for p in pts], dtype=np.int64)
    ys = np.array([p[1] for p in pts], dtype=np.int64)
    want = any(lo2 <= (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 <= lo2 + width
               for a, b in itertools.combinations(pts, 2))
    assert kpy.pair_in_range(xs, ys, lo2, lo2 + width) == want
    if kcy is not None:
        assert bool(kcy.pair_in_range(xs, ys, lo2, lo2 + width)) == want


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 9), st.integers(0, 9))
def test_tube_exit_agrees(seed, tmin, tmax):
    r = np.random.default_rng(seed)
    traj = r.standard_normal((30, 10)).cumsum(axis=1)
    center = np.linspace(0, 1, 10)
    half = np.full(10, 1.5)
    want = np.array([any(abs(traj[i, t] - center[t]) > half[t] for t in range(tmin, tmax + 1))
                     for i in range(30)])
    assert np.array_equal(kpy.tube_exit(traj, center, half, tmin, tmax), want)
    if kcy is not None:
        assert np.array_equal(np.asarray(kcy.tube_exit(traj, center, half, tmin, tmax), bool), want)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_max_subset_sums_agree(seed, m):
    r = np.random.default_rng(seed)
    X = r.standard_normal((20, 6))
    omega = np.array(list(itertools.combinations(range(6), m)), dtype=np.int64)
    want = np.array([max(X[i, list(o)].sum() for o in omega) for i in range(20)])
    assert np.allclose(kpy.max_subset_sums(X, omega), want)
    if kcy is not None:
        assert np.allclose(kcy.max_subset_sums(X, omega), want)
