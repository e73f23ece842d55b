"""Samplers for the DGFF, the scale-inhomogeneous field, branching random
walks, the three-field approximation and the surrogate process."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from . import kernels
from .centering import LOG2
from .covariance import (CovarianceMatrix, LinearFunctionalMatrix, _overlap,
                         _scale_functional, green_diagonal, green_kernel,
                         psi_functional_matrix)
from .errors import ConfigError, NumericError
from .geometry import BoxSpec, _log2_exact, restricted_set, torus_axis_gaps
from .profile import VarianceProfile

log = logging.getLogger(__name__)
SQRT_LOG2 = math.sqrt(LOG2)


@dataclass
class FieldSample:
    """One realization on V_N, optionally with per-level partial sums."""

    model: str
    spec: BoxSpec
    values: np.ndarray
    trajectories: np.ndarray | None = None
    components: dict = field(default_factory=dict)
    seed: int | None = None
    stream: tuple | None = None


@dataclass
class FieldBatch:
    """Replicas stacked along the first axis."""

    model: str
    spec: BoxSpec
    values: np.ndarray
    trajectories: np.ndarray | None = None
    components: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> FieldSample:
        tr = None if self.trajectories is None else self.trajectories[i]
        comps = {k: v[i] for k, v in self.components.items()}
        return FieldSample(self.model, self.spec, self.values[i], tr, comps)


# ------------------------------------------------------------------- Gaussians

def mvn_factor(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square-root factor restricted to the support of ``cov``.

    Returns (support indices, factor L with L L^T = cov[support, support]).
    """
    cov = np.asarray(cov, dtype=float)
    dim = cov.shape[0]
    support = np.nonzero(np.diag(cov) > 0)[0]
    if len(support) == 0:
        return support, np.zeros((0, 0))
    sub = cov[np.ix_(support, support)]
    sub = 0.5 * (sub + sub.T)
    w, V = np.linalg.eigh(sub)
    floor = -1e-8 * max(np.trace(sub), 1e-300) / dim
    if w[0] < floor:
        raise NumericError(f"covariance not PSD: smallest eigenvalue {w[0]:.3g}")
    return support, V * np.sqrt(np.clip(w, 0.0, None))


def mvn_sample(cov, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Zero-mean Gaussian vectors with covariance ``cov``; shape (count, dim)."""
    mat = cov.matrix if isinstance(cov, CovarianceMatrix) else np.asarray(cov, float)
    support, L = mvn_factor(mat)
    out = np.zeros((count, mat.shape[0]))
    if len(support):
        z = rng.standard_normal((count, len(support)))
        out[:, support] = z @ L.T
    return out


def _dgff_scales(m: int) -> np.ndarray:
    mu = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, m + 1) / (m + 1))
    return np.sqrt(2.0 * np.pi / (mu[:, None] + mu[None, :]))


def dgff_interior(side: int, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """DGFF on V_side restricted to the interior; shape (count, side-2, side-2).

    Exact: the Dirichlet Laplacian is diagonalized by the orthonormal DST-I.
    """
    m = side - 2
    if m <= 0:
        return np.zeros((count, 0, 0))
    z = rng.standard_normal((count, m, m))
    z *= _dgff_scales(m)
    return sfft.dstn(z, type=1, norm="ortho", axes=(1, 2))


def dgff_sample(spec: BoxSpec, rng: np.random.Generator, count: int = 1) -> FieldBatch:
    N = spec.N
    vals = np.zeros((count, N, N))
    vals[:, 1:-1, 1:-1] = dgff_interior(N, rng, count)
    return FieldBatch("dgff", spec, vals)


def psi_sample(spec: BoxSpec, profile: VarianceProfile, rng: np.random.Generator,
               count: int = 1, functional: LinearFunctionalMatrix | None = None,
               keep_trajectories: bool = False) -> FieldBatch:
    """psi = A phi with phi a DGFF sample.

    With ``keep_trajectories`` the conditional fields phi_v(lambda_i) at the
    profile breakpoints are stored along axis 1.
    """
    A = functional if functional is not None else psi_functional_matrix(spec, profile)
    phi = dgff_sample(spec, rng, count).values
    N = spec.N
    flat = phi.reshape(count, N * N).T
    psi = np.asarray(A.matrix @ flat).T.reshape(count, N, N)
    traj = None
    if keep_trajectories:
        layers = [np.zeros((count, N, N))]
        for lam in profile.breakpoints[1:-1]:
            r, c, v = _scale_functional(spec, lam)
            L = sp.csr_matrix((v, (r, c)), shape=(N * N, N * N))
            layers.append(np.asarray(L @ flat).T.reshape(count, N, N))
        layers.append(phi)
        traj = np.stack(layers, axis=1)
    return FieldBatch("psi", spec, psi, traj)


# ------------------------------------------------------ branching random walks

def ibrw_sample(profile: VarianceProfile, n: int, rng: np.random.Generator,
                keep_trajectories: bool = False, count: int = 1) -> FieldBatch:
    """Dyadic branching random walk; noise drawn from the coarsest level down.

    Trajectory index t holds the sum of the t coarsest levels, so t = n is
    the value and t = 0 is zero.
    """
    N = 1 << n
    w = profile.level_weights(n)
    vals = np.zeros((count, N, N))
    traj = np.zeros((count, n + 1, N, N)) if keep_trajectories else None
    for r in range(count):
        cur = np.zeros((1, 1))
        for t, k in enumerate(range(n - 1, -1, -1), start=1):
            m = N >> k
            cur = np.repeat(np.repeat(cur, 2, axis=0), 2, axis=1)
            cur += SQRT_LOG2 * w[k] * rng.standard_normal((m, m))
            if traj is not None:
                traj[r, t] = np.repeat(np.repeat(cur, 1 << k, axis=0), 1 << k, axis=1)
        vals[r] = cur
    return FieldBatch("ibrw", BoxSpec(n), vals, traj)


def mibrw_sample(profile: VarianceProfile, n: int, rng: np.random.Generator,
                 keep_trajectories: bool = False, count: int = 1) -> FieldBatch:
    """Torus-periodized modified branching random walk.

    Level k adds 2^-k sqrt(ln 2) w_k times the sum of white noise over the
    2^{2k} corners of side-2^k torus squares containing the vertex.
    """
    N = 1 << n
    w = profile.level_weights(n)
    vals = np.zeros((count, N, N))
    traj = np.zeros((count, n + 1, N, N)) if keep_trajectories else None
    noise = np.empty((N, N))
    for r in range(count):
        out = np.zeros((N, N))
        for t, k in enumerate(range(n - 1, -1, -1), start=1):
            rng.standard_normal(out=noise)
            kernels.add_torus_box_sum(noise, 1 << k, SQRT_LOG2 * w[k] / (1 << k), out)
            if traj is not None:
                traj[r, t] = out
        vals[r] = out
    return FieldBatch("mibrw", BoxSpec(n), vals, traj)


def _torus_box_sum_batch(x: np.ndarray, side: int) -> np.ndarray:
    """Batched torus window sums over the last two axes (numpy)."""
    M = x.shape[-1]
    if side >= M:
        return np.broadcast_to(x.sum(axis=(-2, -1), keepdims=True), x.shape).copy()
    if side == 1:
        return x.copy()
    p = np.concatenate([x[..., M - side + 1:, :], x], axis=-2).cumsum(axis=-2)
    rows = p[..., side - 1:, :].copy()
    rows[..., 1:, :] -= p[..., :-side, :]
    q = np.concatenate([rows[..., M - side + 1:], rows], axis=-1).cumsum(axis=-1)
    box = q[..., side - 1:].copy()
    box[..., 1:] -= q[..., :-side]
    return box


# ---------------------------------------------------------- three-field model

@dataclass
class ThreeFieldParams:
    """Coarse / intermediate / bottom decomposition on V_N.

    Box families: N/(KL) for the coarse field, K'L' for the bottom field.
    ``alpha_hat`` is the deviation constant used in variance matching;
    ``a`` holds the matching constants per residue class mod K'L'.
    """

    N: int
    K: int
    L: int
    Kp: int
    Lp: int
    profile: VarianceProfile
    alpha_hat: float = 0.0
    a: np.ndarray | None = None

    def __post_init__(self):
        for name in ("N", "K", "L", "Kp", "Lp"):
            _log2_exact(int(getattr(self, name)))
        if self.N % (self.K * self.L):
            raise ConfigError("K L must divide N")
        if not self.box > self.small:
            raise ConfigError(f"need N/(KL) = {self.box} > K'L' = {self.small}")
        if self.small < 2 or self.K * self.L < 2:
            raise ConfigError("K L and K'L' must be at least 2")
        if self.a is not None and np.any(np.asarray(self.a) < 0):
            raise ConfigError("matching constants must be non-negative")

    @property
    def n(self) -> int:
        return _log2_exact(self.N)

    @property
    def kbar(self) -> int:
        return _log2_exact(self.K * self.L)

    @property
    def lbar(self) -> int:
        return _log2_exact(self.Kp * self.Lp)

    @property
    def coarse(self) -> int:
        return self.K * self.L

    @property
    def box(self) -> int:
        return self.N // (self.K * self.L)

    @property
    def small(self) -> int:
        return self.Kp * self.Lp

    def levels(self) -> list[int]:
        """Intermediate MIBRW levels l'+k' .. n-l-k."""
        return list(range(self.lbar, self.n - self.kbar + 1))

    def level_weights(self) -> np.ndarray:
        w = self.profile.level_weights(self.n)
        return np.array([w[j] for j in self.levels()])


def three_field_component_variances(params: ThreeFieldParams) -> dict:
    """Per-vertex variances of the coarse, bottom and intermediate parts."""
    N, C, b = params.N, params.coarse, params.small
    s0, s1 = params.profile.sigma0 ** 2, params.profile.sigma1 ** 2
    gc = np.zeros((C, C))
    gc[1:-1, 1:-1] = green_diagonal(C - 2, C - 2) if C > 2 else 0.0
    coarse = s0 * np.kron(gc, np.ones((params.box, params.box)))
    gb = np.zeros((b, b))
    if b > 2:
        gb[1:-1, 1:-1] = green_diagonal(b - 2, b - 2)
    bottom = s1 * np.tile(gb, (N // b, N // b))
    mid = np.full((N, N), LOG2 * float(np.sum(params.level_weights() ** 2)))
    return {"coarse": coarse, "bottom": bottom, "middle": mid}


@dataclass
class MatchResult:
    a: np.ndarray
    a2_vertex: np.ndarray
    mask: np.ndarray
    mean_abs_gap: float
    max_a: float
    bound: float


def _class_means(params: ThreeFieldParams, psi_var: np.ndarray, delta: float):
    """Per-vertex a^2 before the 4 alpha shift and its residue-class means over V*."""
    N, b = params.N, params.small
    comps = three_field_component_variances(params)
    base = psi_var - (comps["coarse"] + comps["bottom"] + comps["middle"])
    mask = restricted_set(BoxSpec.from_side(N), params.K, params.L, delta)
    cls = (np.arange(N)[:, None] % b) * b + (np.arange(N)[None, :] % b)
    sums = np.bincount(cls[mask], weights=base[mask], minlength=b * b)
    cnts = np.bincount(cls[mask], minlength=b * b)
    allsum = np.bincount(cls.ravel(), weights=base.ravel(), minlength=b * b)
    allcnt = np.bincount(cls.ravel(), minlength=b * b)
    mean = np.where(cnts > 0, sums / np.maximum(cnts, 1), allsum / allcnt)
    return base, mean, mask, cls


def minimal_alpha(params: ThreeFieldParams, psi_var: np.ndarray,
                  delta: float = 1.0 / 16) -> float:
    """Smallest alpha for which every class constant a^2 is non-negative."""
    _, mean, _, _ = _class_means(params, psi_var, delta)
    return max(0.0, -float(mean.min()) / 4.0)


def variance_match_constants(params: ThreeFieldParams, psi_var: np.ndarray,
                             delta: float = 1.0 / 16, tol: float = 1e-9) -> MatchResult:
    """a^2_{N,v} = Var psi_v + 4 alpha - Var(components), averaged per residue class.

    The class average runs over V*_{N,delta}. ``mean_abs_gap`` is the mean over
    V* of |Var S_v - Var psi_v - 4 alpha|.
    """
    base, mean, mask, cls = _class_means(params, psi_var, delta)
    shift = 4.0 * params.alpha_hat
    a2, mean = base + shift, mean + shift
    if mean.min() < -tol:
        need = params.alpha_hat - mean.min() / 4.0
        raise NumericError(f"negative matching variance {mean.min():.4g}; "
                           f"alpha_hat too small, try alpha_hat >= {need:.4g}")
    b = params.small
    a = np.sqrt(np.clip(mean, 0.0, None)).reshape(b, b)
    gap = np.abs(mean[cls] - a2)
    return MatchResult(a, a2, mask, float(gap[mask].mean()), float(a.max()),
                       math.sqrt(8.0 * params.alpha_hat))


def _intermediate(params: ThreeFieldParams, rng, count: int) -> np.ndarray:
    """Per coarse box MIBRW on the torus of side N/(KL), read at small-box corners."""
    C, M, b = params.coarse, params.box, params.small
    g = M // b
    out = np.zeros((count, C * C, g, g))
    for j, w in zip(params.levels(), params.level_weights()):
        s = 1 << j
        blocks = b * rng.standard_normal((count, C * C, g, g))
        # s/b whole blocks per axis give the same overlap counts as the s-wide window
        box = _torus_box_sum_batch(blocks, s // b)
        out += SQRT_LOG2 * w / s * box
    out = out.reshape(count, C, C, g, g).transpose(0, 1, 3, 2, 4).reshape(count, C * g, C * g)
    return np.repeat(np.repeat(out, b, axis=1), b, axis=2)


def three_field_sample(params: ThreeFieldParams, rng: np.random.Generator,
                       count: int = 1) -> FieldBatch:
    """S = coarse + bottom + intermediate + a Phi, components stored separately."""
    if params.a is None:
        raise ConfigError("matching constants missing; run variance_match_constants")
    N, C, M, b = params.N, params.coarse, params.box, params.small
    s0, s1 = params.profile.sigma0, params.profile.sigma1
    gc = np.zeros((count, C, C))
    gc[:, 1:-1, 1:-1] = dgff_interior(C, rng, count)
    coarse = s0 * np.repeat(np.repeat(gc, M, axis=1), M, axis=2)
    nb = N // b
    small = np.zeros((count, nb * nb, b, b))
    if b > 2:
        small[:, :, 1:-1, 1:-1] = dgff_interior(b, rng, count * nb * nb).reshape(
            count, nb * nb, b - 2, b - 2)
    bottom = s1 * small.reshape(count, nb, nb, b, b).transpose(0, 1, 3, 2, 4).reshape(count, N, N)
    middle = _intermediate(params, rng, count)
    phi = rng.standard_normal((count, nb, nb))
    extra = np.repeat(np.repeat(phi, b, axis=1), b, axis=2) * np.tile(params.a, (nb, nb))
    comps = {"coarse": coarse, "bottom": bottom, "middle": middle, "extra": extra}
    return FieldBatch("threefield", BoxSpec.from_side(N),
                      coarse + bottom + middle + extra, None, comps)


def _green4(side: int) -> np.ndarray:
    # a side-2 box has no interior: the field is identically zero
    if side < 3:
        return np.zeros((side,) * 4)
    return green_kernel(side).reshape(side, side, side, side)


def three_field_cov(params: ThreeFieldParams) -> np.ndarray:
    """Exact covariance of S over V_N (row-major); small N only."""
    if params.a is None:
        raise ConfigError("matching constants missing")
    N, C, M, b = params.N, params.coarse, params.box, params.small
    s0, s1 = params.profile.sigma0 ** 2, params.profile.sigma1 ** 2
    x = np.arange(N)
    # coarse: DGFF on V_C evaluated at the box index
    Gc = _green4(C)
    bi = x // M
    cov = s0 * Gc[bi[:, None, None, None], bi[None, :, None, None],
                  bi[None, None, :, None], bi[None, None, None, :]]
    # bottom: independent DGFF per small box
    Gb = _green4(b)
    r = x % b
    same_small = (x[:, None] // b) == (x[None, :] // b)
    bot = Gb[r[:, None, None, None], r[None, :, None, None],
             r[None, None, :, None], r[None, None, None, :]]
    cov += s1 * bot * (same_small[:, None, :, None] & same_small[None, :, None, :])
    # intermediate: torus MIBRW inside each coarse box, at small-box corners
    same_box = (bi[:, None] == bi[None, :])
    corner = (x % M) // b * b
    gaps = torus_axis_gaps(M)[corner[:, None], corner[None, :]]
    mid = np.zeros((N, N, N, N))
    for j, w in zip(params.levels(), params.level_weights()):
        ov = _overlap(gaps, 1 << j, M)
        mid += w * w * ov[:, None, :, None] * ov[None, :, None, :]
    cov += LOG2 * mid * (same_box[:, None, :, None] & same_box[None, :, None, :])
    # a Phi: one standard Gaussian per small box
    av = np.tile(params.a, (N // b, N // b))
    cov += (av[:, :, None, None] * av[None, None, :, :]) * \
        (same_small[:, None, :, None] & same_small[None, :, None, :])
    return cov.reshape(N * N, N * N)


# ------------------------------------------------------------------ surrogate

@dataclass
class SurrogateParams:
    """Bernoulli-thinned shifted exponentials on top of the coarse field."""

    K: int
    L: int
    beta_star: float
    sigma0: float
    gamma: float = 0.6

    def __post_init__(self):
        if not 0.5 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (1/2, 1)")
        if self.beta_star <= 0:
            raise ConfigError("beta_star must be positive")
        _log2_exact(self.K * self.L)

    @property
    def R(self) -> int:
        return (self.K * self.L) ** 2

    @property
    def kbar(self) -> int:
        return _log2_exact(self.K * self.L)

    def raw_probability(self) -> float:
        kb = self.kbar
        return self.beta_star * math.exp(2.0 * kb ** self.gamma) * \
            math.exp(2.0 * LOG2 * kb * (self.sigma0 ** 2 - 1.0))

    def probability(self) -> float:
        p = self.raw_probability()
        if p > 1.0:
            log.warning("Bernoulli probability %.4g clamped to 1", p)
        return min(p, 1.0)


@dataclass
class SurrogateDraw:
    gstar: np.ndarray          # NaN marks the empty outcome
    empty: np.ndarray
    D: np.ndarray
    rho: np.ndarray
    Y: np.ndarray
    Z: np.ndarray


def coarse_marginals(K: int, L: int, sigma0: float, rng, count: int) -> np.ndarray:
    """sigma(0) times the DGFF on V_{KL}, flattened; shape (count, (KL)^2)."""
    C = K * L
    z = np.zeros((count, C, C))
    z[:, 1:-1, 1:-1] = dgff_interior(C, rng, count)
    return sigma0 * z.reshape(count, C * C)


def surrogate_sample(params: SurrogateParams, rng: np.random.Generator, count: int = 1,
                     coarse_sampler=None) -> SurrogateDraw:
    """G* = max over cells with rho = 1 of rho (Y + 2 ln(KL)(1 - s0^2)) + Z - 2 ln(KL).

    The Bernoulli probability is beta* e^{2 kbar^gamma} e^{2 ln2 kbar (s0^2 - 1)}
    clamped to [0, 1]; Y = -kbar^gamma + Exp(rate 2); Z are coarse marginals.
    D = sum_i exp(-2 (ln(KL)(1 + s0^2) - Z_i)).
    """
    R, kb = params.R, params.kbar
    lnKL = math.log(params.K * params.L)
    s02 = params.sigma0 ** 2
    Z = (coarse_sampler or coarse_marginals)(params.K, params.L, params.sigma0, rng, count)
    rho = rng.random((count, R)) < params.probability()
    Y = -kb ** params.gamma + rng.exponential(0.5, size=(count, R))
    G = np.where(rho, Y + 2.0 * lnKL * (1.0 - s02), 0.0) + Z - 2.0 * lnKL
    masked = np.where(rho, G, -np.inf)
    gstar = masked.max(axis=1)
    empty = ~rho.any(axis=1)
    gstar[empty] = np.nan
    D = np.exp(-2.0 * (lnKL * (1.0 + s02) - Z)).sum(axis=1)
    return SurrogateDraw(gstar, empty, D, rho, Y, Z)
