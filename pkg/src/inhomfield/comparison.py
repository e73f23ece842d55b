"""Numerical checks of Gaussian comparison inequalities and of the
block-perturbation experiments."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate
from scipy import stats as sps

from . import kernels
from .errors import DomainError, PreconditionError, SizeError
from .extremes import dist_distance, levy_prokhorov
from .samplers import mvn_factor
from .stats import wilson_interval

EXACT_MAX_DIM = 3
HYP_TOL = 1e-10


# ---------------------------------------------------------------- instances

def increments(C: np.ndarray) -> np.ndarray:
    """gamma_ij = E (X_i - X_j)^2."""
    d = np.diag(C)
    return d[:, None] + d[None, :] - 2.0 * C


@dataclass
class HypothesisReport:
    psd_x: bool
    psd_y: bool
    equal_variances: bool
    x_dominates_y: bool
    increments_ordered: bool
    gamma: float
    worst_pair: tuple | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ComparisonInstance:
    """Two centered Gaussian vectors on a shared index set."""

    cov_x: np.ndarray
    cov_y: np.ndarray
    labels: list | None = None

    def __post_init__(self):
        self.cov_x = np.asarray(self.cov_x, dtype=float)
        self.cov_y = np.asarray(self.cov_y, dtype=float)
        if self.cov_x.shape != self.cov_y.shape or self.cov_x.ndim != 2:
            raise DomainError("covariances must be square and of equal size")

    @property
    def dim(self) -> int:
        return self.cov_x.shape[0]

    def hypotheses(self, tol: float = HYP_TOL) -> HypothesisReport:
        X, Y = self.cov_x, self.cov_y
        diff = X - Y
        gx, gy = increments(X), increments(Y)
        worst = None
        if np.any(diff < -tol):
            i, j = np.unravel_index(int(np.argmin(diff)), diff.shape)
            worst = (int(i), int(j))
        return HypothesisReport(
            _psd(X), _psd(Y),
            bool(np.all(np.abs(np.diag(diff)) <= tol)),
            bool(np.all(diff >= -tol)),
            bool(np.all(gx <= gy + tol)),
            float(np.max(np.abs(gx - gy))),
            worst)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.cov_x).tobytes())
        h.update(np.ascontiguousarray(self.cov_y).tobytes())
        return h.hexdigest()[:16]


def _psd(C: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(0.5 * (C + C.T))
    return bool(w[0] >= -1e-9 * max(1.0, abs(w[-1])))


def random_correlation(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    F = rng.standard_normal((n, rank or n))
    C = F @ F.T
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


def comonotone_blend(C: np.ndarray, t: float) -> np.ndarray:
    """(1 - t) C + t sqrt(C_ii C_jj): same variances, entrywise larger covariances."""
    s = np.sqrt(np.diag(C))
    return (1.0 - t) * C + t * np.outer(s, s)


def random_slepian_instance(n: int, rng: np.random.Generator) -> ComparisonInstance:
    """X dominates Y entrywise with equal variances."""
    scale = rng.uniform(0.5, 2.0)
    Y = scale * random_correlation(n, rng, rank=rng.integers(1, n + 1))
    return ComparisonInstance(comonotone_blend(Y, rng.uniform(0.05, 0.95)), Y)


def random_sf_instance(n: int, rng: np.random.Generator) -> ComparisonInstance:
    X = random_correlation(n, rng, rank=rng.integers(1, n + 1)) * rng.uniform(0.5, 2.0)
    Y = random_correlation(n, rng, rank=rng.integers(1, n + 1)) * rng.uniform(0.5, 2.0)
    return ComparisonInstance(X, Y)


# ------------------------------------------------------------- exact orthant

def _below_prob(x: float, mean: np.ndarray, C: np.ndarray) -> float:
    """P(all coordinates <= x) by recursive conditioning on the first one."""
    n = len(mean)
    v = C[0, 0]
    if v <= 1e-14:
        if mean[0] > x:
            return 0.0
        if n == 1:
            return 1.0
        return _below_prob(x, mean[1:], C[1:, 1:])
    sd = math.sqrt(v)
    if n == 1:
        return float(sps.norm.cdf((x - mean[0]) / sd))
    b = C[1:, 0] / v
    Cc = C[1:, 1:] - np.outer(C[1:, 0], C[0, 1:]) / v

    def integrand(t):
        return sps.norm.pdf(t) * _below_prob(x, mean[1:] + b * sd * t, Cc)

    val, _ = integrate.quad(integrand, -np.inf, (x - mean[0]) / sd,
                            epsabs=1e-11, epsrel=1e-10, limit=200)
    return float(val)


def exceed_prob_exact(C: np.ndarray, x: float) -> float:
    """P(max_i X_i > x) for a centered Gaussian vector with n <= 3."""
    C = np.asarray(C, float)
    if C.shape[0] > EXACT_MAX_DIM:
        raise SizeError(f"exact integration limited to dimension {EXACT_MAX_DIM}")
    return 1.0 - _below_prob(float(x), np.zeros(C.shape[0]), C)


# -------------------------------------------------------------------- verdicts

@dataclass
class Verdict:
    check: str
    instance: str
    hypotheses: dict
    statistic: float
    se: float
    method: str
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _paired(inst: ComparisonInstance, replicas: int, rng):
    """Both vectors driven by one standard normal stream."""
    n = inst.dim
    sx, Lx = mvn_factor(inst.cov_x)
    sy, Ly = mvn_factor(inst.cov_y)
    z = rng.standard_normal((replicas, n))
    X = np.zeros((replicas, n))
    Y = np.zeros((replicas, n))
    if len(sx):
        X[:, sx] = z[:, :len(sx)] @ Lx.T
    if len(sy):
        Y[:, sy] = z[:, :len(sy)] @ Ly.T
    return X, Y


def slepian_check(inst: ComparisonInstance, x: float, replicas: int = 100_000,
                  rng: np.random.Generator | None = None, exact: bool | None = None,
                  k_se: float = 3.0) -> Verdict:
    """P(max X > x) <= P(max Y > x) when Cov X >= Cov Y and variances agree."""
    hyp = inst.hypotheses()
    if not hyp.equal_variances:
        i = int(np.argmax(np.abs(np.diag(inst.cov_x - inst.cov_y))))
        raise PreconditionError(f"variances differ at index ({i}, {i})")
    if not hyp.x_dominates_y:
        raise PreconditionError(f"Cov X < Cov Y at pair {hyp.worst_pair}")
    if exact is None:
        exact = inst.dim <= EXACT_MAX_DIM
    if exact:
        px, py = exceed_prob_exact(inst.cov_x, x), exceed_prob_exact(inst.cov_y, x)
        stat = px - py
        return Verdict("slepian", inst.digest(), hyp.to_dict(), stat, 0.0, "exact",
                       stat <= 1e-6, {"p_x": px, "p_y": py})
    rng = rng or np.random.default_rng()
    X, Y = _paired(inst, replicas, rng)
    d = (X.max(axis=1) > x).astype(float) - (Y.max(axis=1) > x)
    stat = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return Verdict("slepian", inst.digest(), hyp.to_dict(), stat, se, "paired-mc",
                   stat <= k_se * se, {"p_x": float(np.mean(X.max(axis=1) > x)),
                                       "p_y": float(np.mean(Y.max(axis=1) > x))})


def sudakov_fernique_check(inst: ComparisonInstance, replicas: int = 100_000,
                           rng: np.random.Generator | None = None,
                           k_se: float = 3.0) -> Verdict:
    """|E max X - E max Y| <= sqrt(gamma ln n), plus the ordered-increment corollary."""
    hyp = inst.hypotheses()
    if not (hyp.psd_x and hyp.psd_y):
        raise PreconditionError("covariance not PSD")
    rng = rng or np.random.default_rng()
    X, Y = _paired(inst, replicas, rng)
    d = X.max(axis=1) - Y.max(axis=1)
    stat = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(replicas))
    bound = math.sqrt(hyp.gamma * math.log(inst.dim)) if inst.dim > 1 else 0.0
    ok = abs(stat) <= bound + k_se * se
    ordered_ok = None
    if hyp.increments_ordered:
        ordered_ok = stat <= k_se * se
        ok = ok and ordered_ok
    return Verdict("sudakov-fernique", inst.digest(), hyp.to_dict(), stat, se, "paired-mc",
                   bool(ok), {"bound": bound, "ordered_corollary": ordered_ok})


# -------------------------------------------------------------- sums variant

SUM_MAX_N = 8
SUM_MAX_M = 3


def omega_sets(N: int, m: int, r: float) -> np.ndarray:
    """All m-subsets of V_N whose pairwise distances lie in [r, N/r] (row-major indices)."""
    if N > SUM_MAX_N or m > SUM_MAX_M:
        raise SizeError(f"enumeration limited to N <= {SUM_MAX_N}, m <= {SUM_MAX_M}")
    pts = np.array([(x, y) for x in range(N) for y in range(N)])
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    ok = (d2 >= r * r - 1e-9) & (d2 <= (N / r) ** 2 + 1e-9)
    out = []
    for A in itertools.combinations(range(N * N), m):
        if all(ok[i, j] for i, j in itertools.combinations(A, 2)):
            out.append(A)
    return np.array(out, dtype=np.int64).reshape(-1, m)


def sum_slepian_check(cov_eta: np.ndarray, cov_chi: np.ndarray, N: int, m: int, r: float,
                      lam: float, replicas: int = 100_000,
                      rng: np.random.Generator | None = None, k_se: float = 3.0) -> Verdict:
    """P(max_A sum_A eta <= lam) <= P(max_A sum_A chi <= lam) when Cov eta <= Cov chi."""
    inst = ComparisonInstance(cov_chi, cov_eta)
    hyp = inst.hypotheses()
    if not hyp.equal_variances:
        raise PreconditionError("variances of eta and chi differ")
    if not hyp.x_dominates_y:
        raise PreconditionError(f"Cov eta > Cov chi at pair {hyp.worst_pair}")
    omega = omega_sets(N, m, r)
    if len(omega) == 0:
        raise DomainError("no admissible subsets")
    rng = rng or np.random.default_rng()
    chi, eta = _paired(inst, replicas, rng)
    me = kernels.max_subset_sums(eta, omega)
    mc = kernels.max_subset_sums(chi, omega)
    d = (me <= lam).astype(float) - (mc <= lam)
    stat = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(replicas))
    return Verdict("sum-slepian", inst.digest(), hyp.to_dict(), stat, se, "paired-mc",
                   stat <= k_se * se, {"sets": int(len(omega)), "lambda": lam})


# ------------------------------------------------------ perturbation experiments

def block_noise(N: int, side: int, rng, count: int = 1) -> np.ndarray:
    """One standard Gaussian per side x side block, spread over its vertices."""
    if N % side:
        raise DomainError(f"block side {side} does not divide {N}")
    g = rng.standard_normal((count, N // side, N // side))
    return np.repeat(np.repeat(g, side, axis=1), side, axis=2)


@dataclass
class PerturbationReport:
    s: tuple
    grid: list
    ks: list
    levy_prokhorov: list
    replicas: int

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list[dict]:
        return [{"r1": g[0], "r2": g[1], "ks": k, "levy_prokhorov": lp}
                for g, k, lp in zip(self.grid, self.ks, self.levy_prokhorov)]


def perturbation_shift_experiment(base_max_fn, N: int, s, r_grid, replicas: int, seed: int,
                                  lp: bool = True) -> PerturbationReport:
    """Compare law(max(field + s1 g_small + s2 g_large) - |s|^2) with law(max field).

    ``base_max_fn(rng)`` returns one field sample (N x N). The perturbed
    maxima reuse one base stream across the grid; the reference maxima use
    an independent stream. Blocks have sides r1 and N / r2.
    """
    from .rng import stream
    s1, s2 = float(s[0]), float(s[1])
    shift = s1 * s1 + s2 * s2
    grid = list(r_grid)
    pert = np.zeros((len(grid), replicas))
    ref = np.zeros(replicas)
    for i in range(replicas):
        f = base_max_fn(stream(seed, i, "base"))
        noise = stream(seed, i, "blocks")
        gs = noise.standard_normal(N * N)
        for j, (r1, r2) in enumerate(grid):
            small = _blocks_from(gs, N, r1, 0)
            large = _blocks_from(gs, N, N // r2, (N // r1) ** 2)
            pert[j, i] = (f + s1 * small + s2 * large).max() - shift
        ref[i] = base_max_fn(stream(seed, i, "reference")).max()
    ks = [dist_distance(p, ref, "ks") for p in pert]
    lps = [levy_prokhorov(p, ref) if lp else float("nan") for p in pert]
    return PerturbationReport((s1, s2), [list(map(int, g)) for g in grid], ks, lps, replicas)


def _blocks_from(gs: np.ndarray, N: int, side: int, offset: int) -> np.ndarray:
    if N % side:
        raise DomainError(f"block side {side} does not divide {N}")
    m = N // side
    if offset + m * m > len(gs):
        raise DomainError("not enough block variables drawn")
    g = gs[offset:offset + m * m]
    return np.repeat(np.repeat(g.reshape(m, m), side, axis=0), side, axis=1)


def sqrt_exp_tail(rng, shape) -> np.ndarray:
    """1 + sqrt(E) with E ~ Exp(1): saturates P(g >= 1 + y) = e^{-y^2}."""
    return 1.0 + np.sqrt(rng.exponential(1.0, size=shape))


@dataclass
class TailPerturbationReport:
    eps: list
    x: list
    perturbed: list
    shifted: list
    factor: list
    replicas: int

    def to_dict(self) -> dict:
        return asdict(self)


def tail_perturbation_experiment(fields: np.ndarray, eps_list, x_grid, tail_rv, rng,
                                 centering: float, min_exceed: int = 30
                                 ) -> TailPerturbationReport:
    """P(max(field + eps g) >= c + x) versus P(max field >= c + x - sqrt(eps)).

    The fitted factor per eps is the largest ratio over x grid points with
    at least ``min_exceed`` exceedances in both events. The same g draw is
    reused across eps.
    """
    F = np.asarray(fields, float)
    R = F.shape[0]
    g = tail_rv(rng, F.shape)
    base_max = F.reshape(R, -1).max(axis=1)
    pert, shifted, factor = [], [], []
    for eps in eps_list:
        pm = (F + eps * g).reshape(R, -1).max(axis=1)
        rows_p, rows_s, ratios = [], [], []
        for x in x_grid:
            kp = int(np.sum(pm >= centering + x))
            ks = int(np.sum(base_max >= centering + x - math.sqrt(eps)))
            rows_p.append(kp / R)
            rows_s.append(ks / R)
            if kp >= min_exceed and ks >= min_exceed:
                ratios.append(kp / ks)
        pert.append(rows_p)
        shifted.append(rows_s)
        factor.append(max(ratios) if ratios else None)
    return TailPerturbationReport(list(map(float, eps_list)), list(map(float, x_grid)),
                                  pert, shifted, factor, R)


def orthant_mc_agreement(C: np.ndarray, x: float, replicas: int, rng) -> dict:
    """Exact exceedance probability against a plain Monte Carlo estimate."""
    exact = exceed_prob_exact(C, x)
    s, L = mvn_factor(C)
    X = np.zeros((replicas, C.shape[0]))
    X[:, s] = rng.standard_normal((replicas, len(s))) @ L.T
    k = int(np.sum(X.max(axis=1) > x))
    p, lo, hi = wilson_interval(k, replicas)
    se = math.sqrt(max(exact * (1 - exact), 1e-300) / replicas)
    return {"exact": exact, "mc": float(p), "se": se,
            "agree": abs(float(p) - exact) <= 3 * se}
