import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from inhomfield import extremes as ext
from inhomfield.centering import m_N
from inhomfield.errors import DomainError
from inhomfield.profile import VarianceProfile
from inhomfield.rng import stream
from inhomfield.samplers import dgff_sample, ibrw_sample
from inhomfield.geometry import BoxSpec


def _gumbel(rng, R, loc=0.0):
    # P(X <= z) = exp(-e^{-2(z - loc)})
    return loc - 0.5 * np.log(rng.exponential(size=R))


def test_zero_field_centered_max():
    s = ext.centered_max(np.zeros((3, 64, 64)))
    assert np.allclose(s.centered, -m_N(64))
    assert np.all(s.maxima == 0)


def test_max_dominates_values(rng):
    x = rng.standard_normal((5, 16, 16))
    s = ext.centered_max(x)
    for i in range(5):
        assert s.maxima[i] >= x[i].max()
        ax, ay = s.argmax[i]
        assert x[i, ax, ay] == s.maxima[i]


def test_cluster_empty_window():
    cs = ext.pair_cluster_prob(np.ones((4, 16, 16)), [8])
    assert cs.hits == [0] and cs.empty == [True] and cs.probability == [0.0]


def test_cluster_huge_c_gives_one():
    # for r > e the threshold m_N - c ln ln r runs to -inf
    cs = ext.pair_cluster_prob(np.zeros((5, 32, 32)), [4, 5], c=1e9)
    assert cs.probability == [1.0, 1.0]


def test_cluster_threshold_nesting():
    x = dgff_sample(BoxSpec(6), stream(1), 60).values
    lo = ext.pair_cluster_prob(x, [2, 4, 8], c=0.5)
    hi = ext.pair_cluster_prob(x, [2, 4, 8], c=2.0)
    # ln ln 2 < 0 flips the direction at r = 2
    assert hi.hits[0] <= lo.hits[0]
    assert all(a <= b for a, b in zip(lo.hits[1:], hi.hits[1:]))


def test_cluster_pair_search_against_brute_force(rng):
    for _ in range(30):
        x = rng.standard_normal((1, 16, 16)) * 3
        thr = m_N(16) - 1.0 * math.log(math.log(4))
        pts = np.argwhere(x[0] >= thr)
        want = any(4 <= math.dist(p, q) <= 4 for p, q in itertools.combinations(pts, 2))
        assert ext.pair_cluster_prob(x, [4]).hits[0] == int(want)


def test_tail_slope_gumbel():
    x = _gumbel(np.random.default_rng(2), 400_000)
    t = ext.tail_slope(x, [2.0, 2.5, 3.0, 3.5])
    lo, hi = t.slope_ci
    assert lo <= -2.0 <= hi


def test_tail_slope_single_point_fails():
    with pytest.raises(DomainError):
        ext.tail_slope(np.zeros(10), [1.0])


@given(st.lists(st.integers(-30, 30), min_size=2, max_size=8, unique=True))
def test_survival_monotone_and_ci_contains(z):
    z = [k / 10 for k in z]
    x = _gumbel(np.random.default_rng(3), 2000)
    t = ext.tail_slope(x, z, min_exceed=1)
    assert all(a >= b for a, b in zip(t.survival, t.survival[1:]))
    assert all(lo <= p <= hi for lo, p, hi in zip(t.lower, t.survival, t.upper))


def test_shape_pure_gumbel():
    sh = ext.gumbel_mixture_shape(_gumbel(np.random.default_rng(4), 200_000))
    assert sh.slope_ci[0] <= -2.0 <= sh.slope_ci[1]
    assert abs(sh.curvature) < 0.02


def test_shape_lognormal_mixture():
    r = np.random.default_rng(5)
    R = 200_000
    lam = np.exp(0.5 * r.standard_normal(R))
    x = 0.5 * np.log(lam / r.exponential(size=R))
    sh = ext.gumbel_mixture_shape(x)
    pure = ext.gumbel_mixture_shape(_gumbel(r, R))
    assert -2.5 <= sh.slope <= -1.5
    assert sh.curvature < pure.curvature - 0.04


def test_tube_symmetric(two_speed):
    tube = ext.TubeSpec(0.6, 9, two_speed)
    h = tube.half_width()
    assert np.allclose(h, h[::-1])


def test_localization_nesting_and_empty_window(two_speed):
    n = 6
    b = ibrw_sample(two_speed, n, stream(6), keep_trajectories=True, count=80)
    reps = {g: ext.trajectory_localization(b.values, b.trajectories,
                                           ext.TubeSpec(g, n, two_speed), 4, 1.0)
            for g in (0.55, 0.75, 0.99)}
    assert reps[0.99].exits <= reps[0.75].exits <= reps[0.55].exits
    shifts = [ext.trajectory_localization(b.values, b.trajectories,
                                          ext.TubeSpec(0.6, n, two_speed), 4, s)
              for s in (0.0, 0.5, 1.5)]
    assert shifts[0].probability <= shifts[1].probability <= shifts[2].probability
    empty = ext.trajectory_localization(b.values, b.trajectories,
                                        ext.TubeSpec(0.6, n, two_speed), 16, 1.0)
    assert empty.empty_window and empty.fraction == 0.0


def test_localization_window_values():
    assert ext.localization_window(9, 4) == (2, 7)
    assert ext.localization_window(9, 16) == (4, 5)
    assert ext.localization_window(9, 2 ** 5) == (5, 4)


def test_subset_tail_full_box_matches_tail(rng):
    x = dgff_sample(BoxSpec(5), stream(7), 400).values
    full = np.ones((32, 32), bool)
    st_ = ext.subset_max_tail(x, full, 1.0, 0.5)
    t = ext.tail_slope(ext.centered_max(x).centered, [0.5, 1.0], min_exceed=1)
    assert st_.hits == t.counts[0]


def test_subset_tail_proportional_in_size():
    x = dgff_sample(BoxSpec(6), stream(8), 3000).values
    half = np.zeros((64, 64), bool)
    half[:, :32] = True
    quarter = np.zeros((64, 64), bool)
    quarter[:32, :32] = True
    a = ext.subset_max_tail(x, half, 1.0, 2.0).constant
    b = ext.subset_max_tail(x, quarter, 1.0, 2.0).constant
    assert 0.5 <= a / b <= 2.0


@pytest.mark.parametrize("y", [1.0, 6.0])
def test_subset_tail_single_vertex_gaussian(y):
    # one vertex of the N = 256 DGFF is N(0, G(v, v)); z - y = 0 and z - y = -5
    from inhomfield.covariance import green_diagonal
    N, z = 256, 1.0
    v = (N // 2, N // 2)
    mask = np.zeros((N, N), bool)
    mask[v] = True
    hits = total = 0
    for i in range(10):
        x = dgff_sample(BoxSpec.from_side(N), stream(9, i), 200).values
        r = ext.subset_max_tail(x, mask, z, y)
        hits += r.hits
        total += r.replicas
    sd = math.sqrt(green_diagonal(N - 2, N - 2)[v[0] - 1, v[1] - 1])
    p = norm.sf((m_N(N) + z - y) / sd)
    _, lo, hi = ext.wilson_interval(hits, total, 3.0)
    assert lo <= p <= hi


def test_subset_tail_domain():
    with pytest.raises(DomainError):
        ext.subset_max_tail(np.zeros((2, 4, 4)), np.ones((4, 4), bool), 0.5, 0.0)


def test_beta_positive_when_exceedances(two_speed):
    fm = _gumbel(np.random.default_rng(10), 5000, loc=5.0)
    rep = ext.beta_star_estimate(fm, 2, 0.6, [2.0, 3.0], two_speed, 9, min_exceed=1)
    for k, b in zip(rep.counts, rep.beta):
        if k > 0:
            assert b > 0


def test_distances_identical_zero(rng):
    a = rng.standard_normal(500)
    for m in ("ks", "levy-prokhorov", "one-sided"):
        assert ext.dist_distance(a, a, m) == 0.0


def test_distances_shift_by_one(rng):
    a = rng.random(5000)
    b = a + 1.0
    assert ext.dist_distance(a, b, "ks") == 1.0
    assert ext.dist_distance(a, b, "one-sided") <= 1e-3
    assert ext.dist_distance(b, a, "one-sided") > 0.5


def _lp_brute(a, b):
    """inf eps with mu(A) <= nu(A^eps) + eps over all subsets A of the atoms (both ways)."""
    pts = np.concatenate([a, b])
    # the infimum sits at a pairwise distance or at a mass level j / n
    masses = {j / len(a) for j in range(len(a) + 1)} | {j / len(b) for j in range(len(b) + 1)}
    cands = sorted(masses | {abs(x - y) for x in pts for y in pts if abs(x - y) <= 1})
    cands += [c + 1e-12 for c in cands]
    best = 1.0
    for eps in sorted(cands):
        ok = True
        for mu, nu in ((a, b), (b, a)):
            for r in range(1, len(mu) + 1):
                for A in itertools.combinations(mu, r):
                    A = np.array(A)
                    mA = np.sum(np.isin(mu, A)) / len(mu)
                    near = np.sum(np.min(np.abs(nu[:, None] - A[None, :]), axis=1) <= eps) / len(nu)
                    if mA > near + eps + 1e-12:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            best = eps
            break
    return best


@pytest.mark.parametrize("seed", range(6))
def test_levy_prokhorov_against_subset_enumeration(seed):
    r = np.random.default_rng(seed)
    a = np.round(r.random(5) * 1.5, 3)
    b = np.round(r.random(5) * 1.5 + 0.2, 3)
    want = _lp_brute(np.unique(a), np.unique(b)) if len(set(a)) == 5 == len(set(b)) else None
    if want is None:
        pytest.skip("ties")
    got = ext.levy_prokhorov(a, b, tol=1e-4)
    assert abs(got - want) <= 2e-4


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=30),
       st.lists(st.floats(-2, 2), min_size=3, max_size=30))
def test_distances_in_unit_interval(a, b):
    for m in ("ks", "levy-prokhorov", "one-sided"):
        d = ext.dist_distance(a, b, m)
        assert 0.0 <= d <= 1.0
    assert ext.dist_distance(a, b, "levy-prokhorov") == pytest.approx(
        ext.dist_distance(b, a, "levy-prokhorov"), abs=2e-3)
