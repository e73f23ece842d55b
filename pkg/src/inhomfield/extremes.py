"""Extreme-value statistics over replicated samples."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .centering import LOG2, M_n, m_N
from .errors import ConfigError, DomainError
from .profile import VarianceProfile
from .stats import ks_statistic, weighted_line, wilson_interval

log = logging.getLogger(__name__)


def _values(samples) -> np.ndarray:
    vals = getattr(samples, "values", samples)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 2:
        vals = vals[None]
    if vals.size == 0 or vals.shape[0] == 0:
        raise DomainError("no samples")
    return vals


def _rows(d: dict, keys) -> list[dict]:
    return [{k: d[k][i] for k in keys} for i in range(len(d[keys[0]]))]


# ------------------------------------------------------------------ maxima

@dataclass
class MaxStat:
    replica: int
    value: float
    argmax: tuple[int, int]
    centered: float


@dataclass
class MaxStats:
    maxima: np.ndarray
    argmax: np.ndarray
    centering: float

    @property
    def centered(self) -> np.ndarray:
        return self.maxima - self.centering

    def __len__(self) -> int:
        return len(self.maxima)

    def __getitem__(self, i: int) -> MaxStat:
        return MaxStat(i, float(self.maxima[i]), tuple(int(c) for c in self.argmax[i]),
                       float(self.maxima[i] - self.centering))

    def quantiles(self, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict:
        return {f"q{int(round(100 * q)):02d}": float(np.quantile(self.centered, q)) for q in qs}

    def iqr(self) -> float:
        q = np.quantile(self.centered, [0.25, 0.75])
        return float(q[1] - q[0])

    def to_dict(self) -> dict:
        return {"replicas": len(self), "centering": self.centering,
                "mean": float(self.centered.mean()), **self.quantiles()}


def resolve_centering(centering, N: int, profile: VarianceProfile | None = None) -> float:
    if isinstance(centering, str):
        if centering == "m_N":
            return m_N(N)
        if centering == "M_n":
            n = int(round(math.log2(N)))
            return M_n(0, n, profile or VarianceProfile.constant(), n)
        raise ConfigError(f"unknown centering {centering!r}")
    return float(centering)


def centered_max(samples, centering="m_N", profile: VarianceProfile | None = None) -> MaxStats:
    """Per-replica maximum, its location and the centered value."""
    vals = _values(samples)
    R, N = vals.shape[0], vals.shape[1]
    flat = vals.reshape(R, -1)
    idx = flat.argmax(axis=1)
    mx = flat[np.arange(R), idx]
    arg = np.stack([idx // vals.shape[2], idx % vals.shape[2]], axis=1)
    return MaxStats(mx, arg, resolve_centering(centering, N, profile))


# --------------------------------------------------------------- clusters

@dataclass
class ClusterStat:
    r: list
    c: float
    thresholds: list
    hits: list
    replicas: int
    probability: list
    lower: list
    upper: list
    empty: list

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list[dict]:
        d = self.to_dict()
        return [{"r": d["r"][i], "estimate": d["probability"][i], "lower": d["lower"][i],
                 "upper": d["upper"][i], "threshold": d["thresholds"][i]}
                for i in range(len(self.r))]


def _has_pair(vals: np.ndarray, thr: float, lo: float, hi: float) -> bool:
    xs, ys = np.nonzero(vals >= thr)
    if len(xs) < 2:
        return False
    # squared lattice distances are integers
    lo2, hi2 = int(math.ceil(lo * lo - 1e-9)), int(math.floor(hi * hi + 1e-9))
    return bool(kernels.pair_in_range(xs.astype(np.int64), ys.astype(np.int64), lo2, hi2))


def pair_cluster_prob(samples, r_grid, c: float = 1.0) -> ClusterStat:
    """Fraction of replicas with two high vertices at distance in [r, N/r].

    High means at least m_N - c ln ln r (natural logarithms).
    """
    vals = _values(samples)
    R, N = vals.shape[0], vals.shape[1]
    r_grid = [float(r) for r in np.atleast_1d(r_grid)]
    mN = m_N(N)
    thr, hits, empty = [], [], []
    for r in r_grid:
        if r < 2:
            raise DomainError("r must be at least 2")
        t = mN - c * math.log(math.log(r))
        thr.append(t)
        if N / r < r:
            hits.append(0)
            empty.append(True)
            continue
        empty.append(False)
        hits.append(sum(_has_pair(vals[i], t, r, N / r) for i in range(R)))
    p, lo, hi = wilson_interval(hits, R)
    return ClusterStat(r_grid, c, thr, hits, R, p.tolist(), lo.tolist(), hi.tolist(), empty)


# ------------------------------------------------------------------- tails

@dataclass
class TailEstimate:
    z: list
    counts: list
    replicas: int
    survival: list
    lower: list
    upper: list
    used: list
    slope: float | None
    slope_ci: tuple | None
    constants: tuple | None

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list[dict]:
        return [{"z": self.z[i], "estimate": self.survival[i], "lower": self.lower[i],
                 "upper": self.upper[i], "count": self.counts[i]} for i in range(len(self.z))]


def tail_slope(centered, z_grid, min_exceed: int = 50) -> TailEstimate:
    """Weighted least-squares slope of ln P(X >= z) against z.

    Only grid points with at least ``min_exceed`` exceedances enter the fit;
    weights are inverse delta-method variances k / (1 - p).
    """
    x = np.asarray(getattr(centered, "centered", centered), dtype=float)
    z = np.sort(np.asarray(z_grid, dtype=float))
    if len(z) < 2:
        raise DomainError("need at least two grid points to fit a slope")
    R = len(x)
    xs = np.sort(x)
    k = R - np.searchsorted(xs, z, side="left")
    p, lo, hi = wilson_interval(k, R)
    # a point with survival one carries no tail information
    used = (k >= min_exceed) & (k < R)
    slope = ci = consts = None
    if used.sum() >= 2:
        w = k[used] / np.maximum(1.0 - p[used], 1e-12)
        fit = weighted_line(z[used], np.log(p[used]), w)
        slope, ci = fit.slope, fit.ci
        scaled = p[used] * np.exp(2.0 * z[used])
        consts = (float(scaled.min()), float(scaled.max()))
    else:
        log.warning("fewer than two grid points with %d exceedances; widen the grid", min_exceed)
    return TailEstimate(z.tolist(), k.tolist(), R, p.tolist(), lo.tolist(), hi.tolist(),
                        used.tolist(), slope, ci, consts)


@dataclass
class ShapeReport:
    slope: float
    slope_ci: tuple
    curvature: float
    quantile_range: tuple
    points: int

    def to_dict(self) -> dict:
        return asdict(self)


def gumbel_mixture_shape(centered, q_range=(0.25, 0.9)) -> ShapeReport:
    """Fit ln(-ln F(z)) against z on the central quantile range.

    F is the empirical CDF with plotting positions i / (R + 1). A pure
    Gumbel law of rate 2 gives a line of slope -2; the quadratic coefficient
    is the curvature diagnostic.
    """
    x = np.sort(np.asarray(getattr(centered, "centered", centered), dtype=float))
    R = len(x)
    F = np.arange(1, R + 1) / (R + 1.0)
    sel = (F >= q_range[0]) & (F <= q_range[1])
    z, y = x[sel], np.log(-np.log(F[sel]))
    if len(z) < 3:
        raise DomainError("too few points in the quantile range")
    fit = weighted_line(z, y)
    zc = z - z.mean()
    curv = float(np.polyfit(zc, y, 2)[0])
    return ShapeReport(fit.slope, fit.ci, curv, tuple(q_range), int(len(z)))


# ----------------------------------------------------------- localization

@dataclass
class TubeSpec:
    gamma: float
    n: int
    profile: VarianceProfile

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")

    def half_width(self) -> np.ndarray:
        t = np.arange(self.n + 1)
        return np.minimum(t, self.n - t).astype(float) ** self.gamma

    def center(self) -> np.ndarray:
        t = np.arange(self.n + 1)
        return 2.0 * LOG2 * self.profile.I_vec(t / self.n) * self.n


@dataclass
class LocalizationReport:
    r: float
    gamma: float
    shift: float
    window: tuple
    replicas: int
    near_max: int
    exits: int
    fraction: float
    probability: float
    probability_ci: tuple
    empty_window: bool

    def to_dict(self) -> dict:
        return asdict(self)


def localization_window(n: int, r: float) -> tuple[int, int]:
    """Integer levels t with log2 r <= t <= n - log2 r."""
    lr = math.log2(r)
    return int(math.ceil(lr - 1e-12)), int(math.floor(n - lr + 1e-12))


def trajectory_localization(values, trajectories, tube: TubeSpec, r: float,
                            shift: float = 0.0, N: int | None = None) -> LocalizationReport:
    """Tube exits of high-vertex trajectories inside the window [log2 r, n - log2 r].

    ``trajectories`` has shape (R, n+1, N, N) with entry t the partial sum
    over the t coarsest levels. A vertex is high when its value is at least
    m_N - shift.
    """
    if trajectories is None:
        raise ConfigError("trajectories were not retained")
    vals = _values(values)
    R = vals.shape[0]
    N = N or vals.shape[1]
    tmin, tmax = localization_window(tube.n, r)
    thr = m_N(N) - shift
    near = exits = 0
    if tmax >= tmin:
        center, half = tube.center(), tube.half_width()
        for i in range(R):
            hx, hy = np.nonzero(vals[i] >= thr)
            if len(hx) == 0:
                continue
            near += 1
            traj = np.ascontiguousarray(np.asarray(trajectories[i])[:, hx, hy].T)
            if np.any(kernels.tube_exit(traj, center, half, tmin, tmax)):
                exits += 1
    else:
        near = int(np.sum(vals.reshape(R, -1).max(axis=1) >= thr))
    p, lo, hi = wilson_interval(exits, R)
    return LocalizationReport(float(r), tube.gamma, shift, (tmin, tmax), R, near, exits,
                              exits / near if near else 0.0, float(p), (float(lo), float(hi)),
                              tmax < tmin)


def coarse_localization(values, coarse, profile: VarianceProfile, kbar: int, n: int,
                        gamma: float = 0.6, shift: float = 0.0) -> LocalizationReport:
    """High vertices whose coarse value leaves 2 ln2 sigma(0)^2 kbar +- i(kbar, n)^gamma."""
    vals, co = _values(values), _values(coarse)
    R, N = vals.shape[0], vals.shape[1]
    thr = m_N(N) - shift
    center = 2.0 * LOG2 * profile.sigma0 ** 2 * kbar
    half = min(kbar, n - kbar) ** gamma
    near = exits = 0
    for i in range(R):
        high = vals[i] >= thr
        if high.any():
            near += 1
            exits += bool(np.any(np.abs(co[i][high] - center) > half))
    p, lo, hi = wilson_interval(exits, R)
    return LocalizationReport(float(2 ** kbar), gamma, shift, (kbar, kbar), R, near, exits,
                              exits / near if near else 0.0, float(p), (float(lo), float(hi)),
                              False)


# ------------------------------------------------------------ subset bound

@dataclass
class SubsetTail:
    size: int
    total: int
    z: float
    y: float
    hits: int
    replicas: int
    probability: float
    ci: tuple
    constant: float
    constant_ci: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def subset_max_tail(samples, subset: np.ndarray, z: float, y: float) -> SubsetTail:
    """P(max over A >= m_N + z - y) and C = P (|V_N| / |A|) e^{2(z - y)}."""
    if z < 1 or y < 0:
        raise DomainError("need z >= 1 and y >= 0")
    vals = _values(samples)
    R, N = vals.shape[0], vals.shape[1]
    mask = np.asarray(subset, dtype=bool)
    if not mask.any():
        raise DomainError("empty subset")
    mx = vals[:, mask].max(axis=1)
    k = int(np.sum(mx >= m_N(N) + z - y))
    p, lo, hi = wilson_interval(k, R)
    scale = (vals.shape[1] * vals.shape[2] / mask.sum()) * math.exp(2.0 * (z - y))
    return SubsetTail(int(mask.sum()), vals.shape[1] * vals.shape[2], z, y, k, R, float(p),
                      (float(lo), float(hi)), float(p) * scale,
                      (float(lo) * scale, float(hi) * scale))


# --------------------------------------------------------------- beta star

@dataclass
class BetaStarReport:
    z: list
    counts: list
    replicas: int
    beta: list
    lower: list
    upper: list
    threshold: list
    spread: float | None
    in_window: list
    exceedance_slope: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def stable(self, tol: float = 0.5) -> bool:
        return self.spread is not None and self.spread < tol

    def value(self) -> float:
        """Geometric mean of the estimates over the usable grid points."""
        b = [v for v in self.beta if v is not None and v > 0]
        if not b:
            raise DomainError("no usable beta estimate")
        return float(math.exp(np.mean(np.log(b))))


def beta_prefactor(kbar: int, gamma: float, sigma0: float, z: float) -> float:
    return math.exp(2.0 * LOG2 * kbar * (1.0 - sigma0 ** 2) - 2.0 * kbar ** gamma + 2.0 * z)


def beta_star_estimate(fine_max, kbar: int, gamma: float, z_list, profile: VarianceProfile,
                       n: int, min_exceed: int = 30, small_side: int | None = None
                       ) -> BetaStarReport:
    """beta(z) = prefactor x P(max fine field >= M_n(kbar, n) - kbar^gamma + z).

    ``fine_max`` holds one maximum per independent coarse box. The spread is
    max/min - 1 over the usable z. ``small_side`` enables the window flag
    z <= ln(small_side).
    """
    x = np.sort(np.asarray(fine_max, dtype=float))
    R = len(x)
    base = M_n(kbar, n, profile, n) - kbar ** gamma
    zs = [float(z) for z in z_list]
    out = {"beta": [], "lower": [], "upper": [], "counts": [], "thr": []}
    used_z, used_p = [], []
    for z in zs:
        thr = base + z
        k = int(R - np.searchsorted(x, thr, side="left"))
        p, lo, hi = wilson_interval(k, R)
        f = beta_prefactor(kbar, gamma, profile.sigma0, z)
        out["counts"].append(k)
        out["thr"].append(thr)
        if k < min_exceed:
            out["beta"].append(None)
            out["lower"].append(None)
            out["upper"].append(None)
            continue
        out["beta"].append(float(p) * f)
        out["lower"].append(float(lo) * f)
        out["upper"].append(float(hi) * f)
        used_z.append(z)
        used_p.append(float(p))
    b = [v for v in out["beta"] if v is not None]
    spread = max(b) / min(b) - 1.0 if len(b) >= 2 else None
    slope = None
    if len(used_z) >= 2:
        slope = weighted_line(used_z, np.log(used_p)).slope
    window = [small_side is None or z <= math.log(small_side) for z in zs]
    return BetaStarReport(zs, out["counts"], R, out["beta"], out["lower"], out["upper"],
                          out["thr"], spread, window, slope)


# --------------------------------------------------------------- distances

def _matched_mass(a: np.ndarray, b: np.ndarray, delta: float) -> float:
    """Largest mass of a coupling of two sorted empirical laws with |x - y| <= delta."""
    n, m = len(a), len(b)
    ra, rb = 1.0 / n, 1.0 / m
    i = j = 0
    wa, wb = ra, rb
    total = 0.0
    while i < n and j < m:
        if a[i] < b[j] - delta:
            i += 1
            wa = ra
        elif b[j] < a[i] - delta:
            j += 1
            wb = rb
        else:
            t = min(wa, wb)
            total += t
            wa -= t
            wb -= t
            if wa <= 1e-15:
                i += 1
                wa = ra
            if wb <= 1e-15:
                j += 1
                wb = rb
    return total


def levy_prokhorov(a, b, tol: float = 1e-3) -> float:
    """Bisection on delta for: some coupling leaves at most delta mass farther than delta."""
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    lo, hi = 0.0, 1.0
    if 1.0 - _matched_mass(a, b, 0.0) <= 1e-12:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 1.0 - _matched_mass(a, b, mid) <= mid + 1e-12:
            hi = mid
        else:
            lo = mid
    return hi


def _one_sided_gap(a: np.ndarray, b: np.ndarray, delta: float) -> float:
    """sup_x mu((x, inf)) - nu((x - delta, inf)) for sorted empirical laws."""
    n, m = len(a), len(b)
    # the supremum is approached as x increases to an atom a_i
    Sa = (n - np.searchsorted(a, a, side="left")) / n
    Sb = (m - np.searchsorted(b, a - delta, side="left")) / m
    return float(max(0.0, np.max(Sa - Sb)))


def one_sided_distance(a, b, tol: float = 1e-3) -> float:
    """inf{delta > 0: mu((x, inf)) <= nu((x - delta, inf)) + delta for all x}."""
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    if _one_sided_gap(a, b, 0.0) <= 1e-12:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _one_sided_gap(a, b, mid) <= mid + 1e-12:
            hi = mid
        else:
            lo = mid
    return hi


def dist_distance(a, b, metric: str = "ks", tol: float = 1e-3) -> float:
    a, b = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise DomainError("empty sample set")
    if metric == "ks":
        return ks_statistic(a, b)
    if metric == "levy-prokhorov":
        return levy_prokhorov(a, b, tol)
    if metric == "one-sided":
        return one_sided_distance(a, b, tol)
    raise ConfigError(f"unknown metric {metric!r}")
