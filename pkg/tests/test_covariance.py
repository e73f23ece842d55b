import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inhomfield.centering import LOG2
from inhomfield.covariance import (continuum_kernels, deviation_alpha, green_diagonal,
                                   green_kernel, green_matrix, harmonic_kernel, ibrw_cov,
                                   ibrw_cov_matrix, mibrw_cov, mibrw_cov_matrix,
                                   near_diagonal_constants, psi_cov, psi_functional_matrix,
                                   psi_variance)
from inhomfield.errors import SizeError
from inhomfield.geometry import BoxSpec
from inhomfield.profile import VarianceProfile


def _walk_green(side):
    """(pi/2) (I - P)^-1 for the walk killed off the interior, built by hand."""
    m = side - 2
    pts = [(x, y) for x in range(m) for y in range(m)]
    idx = {p: i for i, p in enumerate(pts)}
    P = np.zeros((len(pts), len(pts)))
    for (x, y), i in idx.items():
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = idx.get((x + d[0], y + d[1]))
            if j is not None:
                P[i, j] = 0.25
    return 0.5 * math.pi * np.linalg.inv(np.eye(len(pts)) - P)


def test_green_single_interior_vertex():
    G = green_kernel(3)
    assert G[4, 4] == pytest.approx(math.pi / 2, abs=1e-12)
    assert np.count_nonzero(G) == 1


def test_green_four_state_chain():
    # hand solve on the 2x2 interior: diagonal 7/6 expected visits
    G = green_kernel(4)
    for v in ((1, 1), (1, 2), (2, 1), (2, 2)):
        i = v[0] * 4 + v[1]
        assert G[i, i] == pytest.approx(math.pi / 2 * 7 / 6, abs=1e-12)
    assert _walk_green(4)[0, 0] == pytest.approx(math.pi / 2 * 7 / 6, abs=1e-12)


@pytest.mark.parametrize("side", [5, 8, 11])
def test_green_matches_walk_oracle(side):
    G = green_kernel(side).reshape(side, side, side, side)[1:-1, 1:-1, 1:-1, 1:-1]
    m = side - 2
    assert np.allclose(G.reshape(m * m, m * m), _walk_green(side), atol=1e-10)


@pytest.mark.parametrize("a,b", [(3, 3), (6, 4), (14, 14)])
def test_green_diagonal_spectral_vs_dense(a, b):
    # rectangle a x b interior; dense oracle by direct inversion
    n = a * b
    L = np.zeros((n, n))
    for x in range(a):
        for y in range(b):
            i = x * b + y
            L[i, i] = 4
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                if 0 <= x + dx < a and 0 <= y + dy < b:
                    L[i, (x + dx) * b + y + dy] = -1
    want = 2 * math.pi * np.diag(np.linalg.inv(L)).reshape(a, b)
    assert np.allclose(green_diagonal(a, b), want, atol=1e-12)


def test_green_matrix_invariants():
    C = green_matrix(BoxSpec(3))
    assert np.allclose(C.matrix, C.matrix.T)
    assert C.is_psd()
    bd = BoxSpec(3).boundary_mask().ravel()
    assert np.all(C.matrix[bd] == 0)


def test_harmonic_kernel_center_of_3x3():
    hk = harmonic_kernel((0, 2, 0, 2), (1, 1))
    assert hk.total() == pytest.approx(1.0, abs=1e-12)
    assert sorted(map(tuple, hk.targets.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]
    assert np.allclose(hk.weights, 0.25)


def test_harmonic_kernel_point_box():
    hk = harmonic_kernel((4, 4, 7, 7), (4, 7))
    assert hk.targets.tolist() == [[4, 7]] and hk.weights.tolist() == [1.0]


def test_harmonic_kernel_weights_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x0, y0 = rng.integers(0, 10, 2)
        w, h = rng.integers(3, 12, 2)
        v = (rng.integers(x0 + 1, x0 + w - 1), rng.integers(y0 + 1, y0 + h - 1))
        hk = harmonic_kernel((x0, x0 + w - 1, y0, y0 + h - 1), v)
        assert np.all(hk.weights >= 0)
        assert hk.total() == pytest.approx(1.0, abs=1e-12)


def test_harmonic_kernel_is_mean_value_of_harmonic_function():
    # f(x, y) = x^2 - y^2 is discrete harmonic, so its exit mean is f(v)
    hk = harmonic_kernel((0, 9, 0, 6), (4, 3))
    f = hk.targets[:, 0] ** 2 - hk.targets[:, 1] ** 2
    assert hk.weights @ f == pytest.approx(4 ** 2 - 3 ** 2, abs=1e-10)


@pytest.mark.parametrize("N", [8, 16])
def test_psi_reduces_to_green_for_constant(N, flat):
    spec = BoxSpec.from_side(N)
    A = psi_functional_matrix(spec, flat).matrix.toarray()
    inner = spec.interior_mask().ravel()
    assert np.allclose(A[np.ix_(inner, inner)], np.eye(inner.sum()), atol=1e-12)
    assert np.max(np.abs(psi_cov(spec, flat).matrix - green_matrix(spec).matrix)) <= 1e-9


def test_psi_cov_psd_and_boundary(two_speed):
    C = psi_cov(BoxSpec(4), two_speed)
    assert C.is_psd()
    bd = BoxSpec(4).boundary_mask().ravel()
    assert np.all(C.matrix[bd] == 0) and np.all(C.matrix[:, bd] == 0)


@pytest.mark.parametrize("N", [16, 32])
def test_psi_variance_matches_dense_diagonal(N, two_speed):
    spec = BoxSpec.from_side(N)
    assert np.allclose(psi_variance(spec, two_speed).ravel(),
                       np.diag(psi_cov(spec, two_speed).matrix), atol=1e-9)


def test_functional_guard():
    with pytest.raises(SizeError):
        psi_functional_matrix(BoxSpec(8), VarianceProfile.two_speed(), max_box_side=9)


def _ibrw_brute(profile, n, u, v):
    w = profile.level_weights(n)
    tot = 0.0
    for k in range(n):
        s = 1 << k
        for bx in range(0, 1 << n, s):
            for by in range(0, 1 << n, s):
                inside = lambda p: bx <= p[0] < bx + s and by <= p[1] < by + s
                if inside(u) and inside(v):
                    tot += w[k] ** 2
    return LOG2 * tot


def _mibrw_brute(profile, n, u, v):
    # enumerate every side-2^k torus square by its corner
    N = 1 << n
    w = profile.level_weights(n)
    tot = 0.0
    for k in range(n):
        s = 1 << k
        cnt = 0
        for cx, cy in itertools.product(range(N), range(N)):
            inside = lambda p: (p[0] - cx) % N < s and (p[1] - cy) % N < s
            cnt += inside(u) and inside(v)
        tot += w[k] ** 2 * cnt / s ** 2
    return LOG2 * tot


@given(st.integers(2, 3), st.data())
def test_brw_covariances_match_enumeration(n, data):
    N = 1 << n
    u = data.draw(st.tuples(st.integers(0, N - 1), st.integers(0, N - 1)))
    v = data.draw(st.tuples(st.integers(0, N - 1), st.integers(0, N - 1)))
    p = VarianceProfile.two_speed()
    assert ibrw_cov(p, n, u, v) == pytest.approx(_ibrw_brute(p, n, u, v), abs=1e-12)
    assert mibrw_cov(p, n, u, v) == pytest.approx(_mibrw_brute(p, n, u, v), abs=1e-12)


def test_brw_variance_is_n_log2(flat, two_speed):
    for p in (flat, two_speed):
        n = 4
        assert ibrw_cov(p, n, (3, 5), (3, 5)) == pytest.approx(n * LOG2, abs=1e-12)
        assert mibrw_cov(p, n, (3, 5), (3, 5)) == pytest.approx(n * LOG2, abs=1e-12)


def test_ibrw_different_top_children_share_only_top():
    # n = 3 has no level covering the whole box, so these share nothing
    p = VarianceProfile.two_speed()
    assert ibrw_cov(p, 3, (0, 0), (7, 7)) == 0.0
    assert ibrw_cov(p, 3, (0, 0), (3, 3)) == pytest.approx(LOG2 * p.level_weights(3)[2] ** 2)


def test_mibrw_antipodal_uses_coarse_levels_only(two_speed):
    n, N = 4, 16
    w = two_speed.level_weights(n)
    c = mibrw_cov(two_speed, n, (0, 0), (N // 2, N // 2))
    # only the side-8 level overlaps at gap 8, and there it overlaps by 0
    assert c == pytest.approx(0.0, abs=1e-14)
    c2 = mibrw_cov(two_speed, n, (0, 0), (4, 0))
    assert c2 == pytest.approx(LOG2 * w[3] ** 2 * 0.5, abs=1e-12)


@given(st.integers(2, 4))
def test_cov_matrices_agree_with_pointwise(n):
    p = VarianceProfile.two_speed()
    N = 1 << n
    Ci = ibrw_cov_matrix(p, n).matrix
    Cm = mibrw_cov_matrix(p, n)
    rng = np.random.default_rng(n)
    for _ in range(20):
        u, v = rng.integers(0, N, 2), rng.integers(0, N, 2)
        i, j = u[0] * N + u[1], v[0] * N + v[1]
        assert Ci[i, j] == pytest.approx(ibrw_cov(p, n, u, v), abs=1e-12)
        assert Cm[i, j] == pytest.approx(mibrw_cov(p, n, u, v), abs=1e-12)


def test_mibrw_translation_invariant(two_speed):
    n, N = 4, 16
    C = mibrw_cov_matrix(two_speed, n).reshape(N, N, N, N)
    shifted = np.roll(np.roll(np.roll(np.roll(C, 3, 0), 5, 1), 3, 2), 5, 3)
    assert np.allclose(C, shifted)


def test_deviation_bounded_and_restriction_helps(flat, two_speed):
    for model, p in (("dgff", flat), ("mibrw", flat), ("psi", two_speed)):
        rep = deviation_alpha(model, p, [16, 32])
        assert all(np.isfinite(rep.sup_deviation)) and min(rep.sup_deviation) >= 0
    full = deviation_alpha("dgff", flat, [32], delta=0.0).sup_deviation[0]
    bulk = deviation_alpha("dgff", flat, [32], delta=0.1).sup_deviation[0]
    assert bulk <= full


def test_continuum_kernels_symmetry_and_center():
    k64 = continuum_kernels(64, 8)
    h = k64.h
    off = ~np.isnan(h)
    assert np.allclose(h[off], h.T[off], atol=0.05)
    c = k64.f_at(0.5, 0.5)
    assert c == pytest.approx(np.max(k64.f), abs=1e-12)
    k128 = continuum_kernels(128, 8)
    assert abs(k128.f_at(0.5, 0.5) - c) < 0.05


def test_near_diagonal_residual_shrinks(two_speed):
    kern = continuum_kernels(64, 8)
    offs = [(0, 0), (1, 0), (0, 1)]
    rep = near_diagonal_constants(two_speed, [16, 32, 64], (0.5, 0.5), offs, kern)
    assert rep.residual[-1] <= rep.residual[0]
