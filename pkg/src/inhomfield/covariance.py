"""Exact covariances: Green functions, harmonic kernels, the linear map
from the DGFF to the scale-inhomogeneous field, and hierarchical
(branching random walk) covariances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .centering import LOG2
from .errors import ConfigError, DomainError, NumericError, SizeError
from .geometry import BoxSpec, ScaleBox, half_width, scale_box, torus_axis_gaps
from .profile import VarianceProfile

TWO_PI = 2.0 * math.pi
DENSE_MAX_N = 64
MAX_BOX_SIDE = DENSE_MAX_N + 1


@dataclass
class CovarianceMatrix:
    """Dense covariance over V_N in row-major vertex order."""

    spec: BoxSpec
    matrix: np.ndarray
    tag: str = ""
    boundary: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def index_map(self) -> np.ndarray:
        N = self.spec.N
        i = np.arange(N * N)
        return np.stack([i // N, i % N], axis=1)

    def entry(self, u, v) -> float:
        return float(self.matrix[self.spec.index(u), self.spec.index(v)])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self) -> bool:
        floor = -1e-8 * np.trace(self.matrix) / self.dim
        return self.min_eigenvalue() >= floor


# ---------------------------------------------------------------- Green kernel

def _grid_laplacian(a: int, b: int) -> sp.csr_matrix:
    """4 I - adjacency on an a x b grid (row-major, index x * b + y)."""
    def path(m):
        return sp.diags([np.ones(m - 1), np.ones(m - 1)], [-1, 1], shape=(m, m))
    adj = sp.kron(path(a), sp.identity(b)) + sp.kron(sp.identity(a), path(b))
    return (4.0 * sp.identity(a * b) - adj).tocsr()


def green_kernel(side: int) -> np.ndarray:
    """Normalized Green function on the square box of any integer side.

    Row-major over all side^2 vertices, zero on the boundary rows/columns.
    """
    side = int(side)
    if side < 3:
        raise DomainError("need side >= 3 for a non-empty interior")
    if side > DENSE_MAX_N:
        raise SizeError(f"dense Green matrix capped at side {DENSE_MAX_N}")
    m = side - 2
    lap = _grid_laplacian(m, m).toarray()
    try:
        inv = sla.cho_solve(sla.cho_factor(lap), np.eye(m * m))
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular interior system") from exc
    inv = 0.5 * (inv + inv.T)
    full = np.zeros((side * side, side * side))
    idx = (np.arange(1, side - 1)[:, None] * side + np.arange(1, side - 1)[None, :]).ravel()
    full[np.ix_(idx, idx)] = TWO_PI * inv
    return full


def green_matrix(spec: BoxSpec) -> CovarianceMatrix:
    """(pi/2) x expected visits before hitting the boundary of V_N."""
    full = green_kernel(spec.N)
    return CovarianceMatrix(spec, full, "dgff", spec.boundary_mask().ravel())


def _sine_basis(a: int) -> np.ndarray:
    """Orthonormal Dirichlet eigenvectors of the path of length a (columns)."""
    x = np.arange(1, a + 1)
    return np.sqrt(2.0 / (a + 1)) * np.sin(np.pi * np.outer(x, x) / (a + 1))


def _path_eigenvalues(a: int) -> np.ndarray:
    return 2.0 - 2.0 * np.cos(np.pi * np.arange(1, a + 1) / (a + 1))


@lru_cache(maxsize=256)
def green_diagonal(a: int, b: int) -> np.ndarray:
    """Diagonal of the normalized Green function on an a x b interior grid.

    Spectral formula: 2 pi sum_jk s_j(x)^2 s_k(y)^2 / (mu_j + mu_k).
    """
    if a <= 0 or b <= 0:
        return np.zeros((max(a, 0), max(b, 0)))
    sa, sb = _sine_basis(a) ** 2, _sine_basis(b) ** 2
    mu = _path_eigenvalues(a)[:, None] + _path_eigenvalues(b)[None, :]
    out = TWO_PI * sa @ (1.0 / mu) @ sb.T
    out.setflags(write=False)
    return out


def green_variance(spec: BoxSpec) -> np.ndarray:
    """G_{V_N}(v, v) for every v, as an N x N array (zero on the boundary)."""
    N = spec.N
    out = np.zeros((N, N))
    out[1:-1, 1:-1] = green_diagonal(N - 2, N - 2)
    return out


# ------------------------------------------------------------ harmonic kernels

@dataclass
class HarmonicKernel:
    """Exit distribution of simple random walk from ``source``."""

    source: tuple
    targets: np.ndarray
    weights: np.ndarray

    def total(self) -> float:
        return float(self.weights.sum())


@lru_cache(maxsize=4096)
def _rect_exit(w: int, h: int):
    """Exit law from every interior point of a w x h rectangle to its ring.

    Returns (ring offsets (r, 2), matrix of shape (w-2, h-2, r)).
    """
    a, b = w - 2, h - 2
    ring = [(x, y) for x in range(w) for y in range(h)
            if (x in (0, w - 1) or y in (0, h - 1))
            and not (x in (0, w - 1) and y in (0, h - 1))]
    ring = np.array(ring, dtype=np.int64).reshape(-1, 2)
    if a <= 0 or b <= 0:
        return ring, np.zeros((max(a, 0), max(b, 0), len(ring)))
    rhs = np.zeros((a * b, len(ring)))
    for j, (x, y) in enumerate(ring):
        # the unique interior neighbour of a non-corner ring point
        ix = min(max(x, 1), w - 2) - 1
        iy = min(max(y, 1), h - 2) - 1
        rhs[ix * b + iy, j] = 1.0
    lap = _grid_laplacian(a, b).tocsc()
    sol = spla.splu(lap).solve(rhs)
    sol = sol.reshape(a, b, len(ring))
    sol.setflags(write=False)
    return ring, sol


def _as_rect(box) -> tuple[int, int, int, int]:
    if isinstance(box, ScaleBox):
        return box.x0, box.x1, box.y0, box.y1
    x0, x1, y0, y1 = (int(t) for t in box)
    return x0, x1, y0, y1


def harmonic_kernel(box, v) -> HarmonicKernel:
    """Exit law of the walk from v, killed on the ring of ``box``.

    ``box`` is a ScaleBox or (x0, x1, y0, y1). A source on the ring (or a
    one-point box) gives the point mass at v.
    """
    x0, x1, y0, y1 = _as_rect(box)
    x, y = int(v[0]), int(v[1])
    if not (x0 <= x <= x1 and y0 <= y <= y1):
        raise DomainError(f"source {v} not in box")
    if not (x0 < x < x1 and y0 < y < y1):
        return HarmonicKernel((x, y), np.array([[x, y]]), np.array([1.0]))
    ring, sol = _rect_exit(x1 - x0 + 1, y1 - y0 + 1)
    wts = sol[x - x0 - 1, y - y0 - 1]
    keep = wts > 0
    return HarmonicKernel((x, y), ring[keep] + [x0, y0], wts[keep])


# --------------------------------------------------- scale-inhomogeneous field

@dataclass
class LinearFunctionalMatrix:
    """Sparse A with psi = A phi; rows indexed by vertices of V_N."""

    spec: BoxSpec
    scales: tuple
    sigmas: tuple
    matrix: sp.csr_matrix = field(repr=False)

    def row(self, v) -> np.ndarray:
        return self.matrix.getrow(self.spec.index(v)).toarray().ravel()


def _scale_functional(spec: BoxSpec, lam: float):
    """COO triplets of the functional phi -> phi_v(lam) for all interior v."""
    N = spec.N
    h = half_width(N, lam)
    c = np.arange(1, N - 1)
    if h == 0:
        idx = (c[:, None] * N + c[None, :]).ravel()
        return idx, idx, np.ones(len(idx))
    lo = np.minimum(c, h)
    hi = np.minimum(N - 1 - c, h)
    rows, cols, vals = [], [], []
    keys = sorted(set(zip(lo.tolist(), hi.tolist())))
    for lx, rx in keys:
        xs = c[(lo == lx) & (hi == rx)]
        for ly, ry in keys:
            ys = c[(lo == ly) & (hi == ry)]
            ring, sol = _rect_exit(lx + rx + 1, ly + ry + 1)
            wts = sol[lx - 1, ly - 1]
            keep = wts > 0
            off = ring[keep] - [lx, ly]
            wts = wts[keep]
            src = (xs[:, None] * N + ys[None, :]).ravel()
            sx, sy = np.divmod(src, N)
            tgt = (sx[:, None] + off[:, 0]) * N + (sy[:, None] + off[:, 1])
            rows.append(np.repeat(src, len(wts)))
            cols.append(tgt.ravel())
            vals.append(np.tile(wts, len(src)))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def psi_functional_matrix(spec: BoxSpec, profile: VarianceProfile,
                          max_box_side: int = MAX_BOX_SIDE) -> LinearFunctionalMatrix:
    """Rows a_v = sum_i sigma_i (L_{v, lam_i} - L_{v, lam_{i-1}}).

    L_{v,0} is the zero functional (the field vanishes on the boundary) and
    L_{v,1} is evaluation at v. Boundary rows are zero.
    """
    if not profile.is_step:
        raise ConfigError("the functional matrix needs a step profile")
    N = spec.N
    lams = profile.breakpoints
    sig = profile.values
    for lam in lams[1:-1]:
        side = 2 * half_width(N, lam) + 1
        if side > max_box_side:
            raise SizeError(f"scale box side {side} at lambda={lam} exceeds the dense "
                            f"guard {max_box_side}; use a branching-walk sampler")
    c = np.arange(1, N - 1)
    diag = (c[:, None] * N + c[None, :]).ravel()
    # coefficient of L_{v, lam_i}: sigma_i - sigma_{i+1} (and sigma_M for lam_M = 1)
    parts = [(diag, diag, np.full(len(diag), sig[-1]))]
    for i in range(1, len(lams) - 1):
        coef = sig[i - 1] - sig[i]
        if coef == 0.0:
            continue
        r, cc, v = _scale_functional(spec, lams[i])
        parts.append((r, cc, coef * v))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(N * N, N * N))
    A.sum_duplicates()
    return LinearFunctionalMatrix(spec, tuple(lams), tuple(sig), A)


def psi_cov(spec: BoxSpec, profile: VarianceProfile,
            green: CovarianceMatrix | None = None) -> CovarianceMatrix:
    """Exact covariance A G A^T of the scale-inhomogeneous field."""
    G = green if green is not None else green_matrix(spec)
    A = psi_functional_matrix(spec, profile).matrix
    AG = A @ G.matrix
    C = (A @ AG.T).T
    C = 0.5 * (C + C.T)
    return CovarianceMatrix(spec, np.asarray(C), "psi", spec.boundary_mask().ravel())


def psi_variance(spec: BoxSpec, profile: VarianceProfile) -> np.ndarray:
    """Var(psi_v) for every vertex via orthogonality of the scale increments.

    Var = sum_i sigma_i^2 (G_{B_{i-1}}(v,v) - G_{B_i}(v,v)) where B_i is the
    open scale box at lam_i (B_0 = V_N, B_M empty). Works at any N.
    """
    if not profile.is_step:
        raise ConfigError("psi_variance needs a step profile")
    N = spec.N
    lams, sig = profile.breakpoints, profile.values
    c = np.arange(1, N - 1)

    def box_green(lam):
        if lam == 0.0:
            return green_diagonal(N - 2, N - 2)
        h = half_width(N, lam)
        if h == 0 or lam == 1.0:
            return np.zeros((N - 2, N - 2))
        lo, hi = np.minimum(c, h), np.minimum(N - 1 - c, h)
        out = np.empty((N - 2, N - 2))
        keys = sorted(set(zip(lo.tolist(), hi.tolist())))
        for lx, rx in keys:
            mx = (lo == lx) & (hi == rx)
            for ly, ry in keys:
                my = (lo == ly) & (hi == ry)
                d = green_diagonal(lx + rx - 1, ly + ry - 1)[lx - 1, ly - 1]
                out[np.ix_(mx, my)] = d
        return out

    prev = box_green(0.0)
    var = np.zeros((N - 2, N - 2))
    for i in range(1, len(lams)):
        cur = box_green(lams[i])
        var += sig[i - 1] ** 2 * (prev - cur)
        prev = cur
    out = np.zeros((N, N))
    out[1:-1, 1:-1] = var
    return out


# ------------------------------------------------------ branching random walks

def ibrw_cov(profile: VarianceProfile, n: int, u, v) -> float:
    """ln2 x sum over shared dyadic levels of the squared level weight."""
    w2 = profile.level_weights(n) ** 2
    total = 0.0
    for k in range(n):
        if (u[0] >> k) == (v[0] >> k) and (u[1] >> k) == (v[1] >> k):
            total += w2[k]
    return LOG2 * total


def _overlap(gap: np.ndarray, s: int, M: int) -> np.ndarray:
    """Fraction of the s corner offsets shared by two points at cyclic gap."""
    if s >= M:
        return np.ones_like(gap, dtype=float)
    return np.clip(1.0 - gap / s, 0.0, None)


def mibrw_cov(profile: VarianceProfile, n: int, u, v) -> float:
    """ln2 x sum_k w_k^2 2^{-2k} #(side-2^k torus squares containing u and v)."""
    N = 1 << n
    w2 = profile.level_weights(n) ** 2
    gx = min(abs(u[0] - v[0]) % N, N - abs(u[0] - v[0]) % N)
    gy = min(abs(u[1] - v[1]) % N, N - abs(u[1] - v[1]) % N)
    total = 0.0
    for k in range(n):
        s = 1 << k
        total += w2[k] * float(_overlap(np.array(gx), s, N) * _overlap(np.array(gy), s, N))
    return LOG2 * total


def ibrw_cov_matrix(profile: VarianceProfile, n: int) -> CovarianceMatrix:
    N = 1 << n
    w2 = profile.level_weights(n) ** 2
    c = np.arange(N)
    C = np.zeros((N * N, N * N))
    for k in range(n):
        same = (c[:, None] >> k) == (c[None, :] >> k)
        C += w2[k] * np.kron(same, same)
    return CovarianceMatrix(BoxSpec(n), LOG2 * C, "ibrw")


def mibrw_cov_matrix(profile: VarianceProfile, n: int,
                     levels=None, weights=None, torus: int | None = None) -> np.ndarray:
    """MIBRW covariance on a torus of side ``torus`` (default 2^n).

    ``levels`` and ``weights`` override the level set and the per-level
    weights (used by the intermediate field of the three-field model).
    """
    M = torus if torus is not None else 1 << n
    if levels is None:
        levels = range(n)
        weights = profile.level_weights(n)
    gaps = torus_axis_gaps(M)
    C = np.zeros((M * M, M * M))
    for k, w in zip(levels, weights):
        ov = _overlap(gaps, 1 << k, M)
        C += w * w * np.kron(ov, ov)
    return LOG2 * C


# ------------------------------------------------------------ deviation checks

def _ln_plus(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, 1.0))


@dataclass
class DeviationReport:
    model: str
    N_list: list
    sup_deviation: list
    argmax_pairs: list
    formula: str
    delta: float
    alpha_hat: float = 0.0
    growth_ratio: float = 0.0

    def to_dict(self) -> dict:
        return {"model": self.model, "N": self.N_list,
                "sup_deviation": self.sup_deviation,
                "argmax_pairs": self.argmax_pairs, "formula": self.formula,
                "delta": self.delta, "alpha_hat": self.alpha_hat,
                "growth_ratio": self.growth_ratio}


FORMULAS = {
    "dgff": "ln N - ln+ |u-v|",
    "psi": "ln N * I(1 - ln+ |u-v| / ln N)",
    "mibrw": "ln N * I(1 - ln+ d_torus(u,v) / ln N)",
}


def covariance_for(model: str, spec: BoxSpec, profile: VarianceProfile) -> np.ndarray:
    if model == "dgff":
        return green_matrix(spec).matrix
    if model == "psi":
        return psi_cov(spec, profile).matrix
    if model == "mibrw":
        return mibrw_cov_matrix(profile, spec.n)
    if model == "ibrw":
        return ibrw_cov_matrix(profile, spec.n).matrix
    raise ConfigError(f"no exact covariance for model {model!r}")


def log_target(model: str, spec: BoxSpec, profile: VarianceProfile) -> np.ndarray:
    N = spec.N
    c = np.arange(N)
    if model == "mibrw":
        g = torus_axis_gaps(N)
    else:
        g = np.abs(c[:, None] - c[None, :])
    gx = np.repeat(np.repeat(g, N, axis=0), N, axis=1)
    gy = np.tile(g, (N, N))
    dist = np.hypot(gx, gy)
    lnN = math.log(N)
    if model == "dgff":
        return lnN - _ln_plus(dist)
    arg = np.clip(1.0 - _ln_plus(dist) / lnN, 0.0, 1.0)
    return lnN * profile.I_vec(arg)


def deviation_alpha(model: str, profile: VarianceProfile, N_list,
                    delta: float = 0.1, safety: float = 2.0) -> DeviationReport:
    """Sup over V_N^delta pairs of |exact covariance - log target| per N.

    ``alpha_hat`` is ``safety`` times the largest sup deviation; this is the
    value used wherever a deviation constant is needed downstream.
    """
    sups, pairs = [], []
    for N in N_list:
        spec = BoxSpec.from_side(N)
        C = covariance_for(model, spec, profile)
        T = log_target(model, spec, profile)
        mask = spec.bulk_mask(delta).ravel() if delta > 0 else np.ones(N * N, bool)
        idx = np.nonzero(mask)[0]
        D = np.abs(C[np.ix_(idx, idx)] - T[np.ix_(idx, idx)])
        i, j = np.unravel_index(int(np.argmax(D)), D.shape)
        sups.append(float(D[i, j]))
        pairs.append([list(spec.point(idx[i])), list(spec.point(idx[j]))])
    return DeviationReport(model, list(N_list), sups, pairs, FORMULAS[model], delta,
                           alpha_hat=safety * max(sups),
                           growth_ratio=sups[-1] / sups[0] if sups[0] > 0 else math.inf)


# ------------------------------------------------------------ continuum limits

@dataclass
class ContinuumKernels:
    resolution: int
    grid: np.ndarray
    f: np.ndarray
    h: np.ndarray = field(repr=False)

    def f_at(self, x: float, y: float) -> float:
        i = int(np.argmin(np.abs(self.grid - x)))
        j = int(np.argmin(np.abs(self.grid - y)))
        return float(self.f[i, j])


def continuum_kernels(resolution: int = 64, grid_cells: int = 8) -> ContinuumKernels:
    """Tabulate f and h on the grid {i / grid_cells} of the open unit square.

    Harmonic measure is approximated by the exit law of the walk on the
    lattice {0..R}^2 scaled by 1/R, with R = resolution.
    """
    R = int(resolution)
    if R < 32:
        raise DomainError("resolution below 32 is too coarse")
    if R % grid_cells:
        raise ConfigError("grid_cells must divide the resolution")
    ring, sol = _rect_exit(R + 1, R + 1)
    zr = ring / R
    g = np.arange(1, grid_cells) / grid_cells
    pts = np.array([(a, b) for a in g for b in g])
    lat = np.rint(pts * R).astype(int)
    H = np.array([sol[x - 1, y - 1] for x, y in lat])      # (P, ring)
    dist = np.linalg.norm(zr[None, :, :] - pts[:, None, :], axis=2)   # (P, ring)
    logd = np.log(dist)
    f = np.einsum("pr,pr->p", H, logd).reshape(len(g), len(g))
    E = H @ logd.T                                  # E[p, q] = int Pi(x_p, dz) log|z - x_q|
    pd = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    with np.errstate(divide="ignore"):
        h = -np.log(pd) + E
    np.fill_diagonal(h, np.nan)
    return ContinuumKernels(R, g, f, h)


@dataclass
class NearDiagonalReport:
    N_list: list
    x: tuple
    offsets: list
    g: np.ndarray
    residual: list


def near_diagonal_constants(profile: VarianceProfile, N_list, x, offsets,
                            kernels: ContinuumKernels) -> NearDiagonalReport:
    """Estimate g(u, v) as the residual constant of near-diagonal psi covariances.

    g is read off at the largest N; the report lists, for every N, the sup
    over offset pairs of |E psi psi - ln N - s0^2 f(x) - s1^2 g|.
    """
    fx = kernels.f_at(*x)
    s0, s1 = profile.sigma0 ** 2, profile.sigma1 ** 2
    resid = {}
    for N in N_list:
        spec = BoxSpec.from_side(N)
        C = psi_cov(spec, profile)
        base = np.rint(np.asarray(x) * N).astype(int)
        r = np.empty((len(offsets), len(offsets)))
        for i, u in enumerate(offsets):
            for j, v in enumerate(offsets):
                r[i, j] = C.entry(base + u, base + v) - math.log(N) - s0 * fx
        resid[N] = r
    g = resid[N_list[-1]] / s1
    return NearDiagonalReport(list(N_list), tuple(x), [tuple(o) for o in offsets], g,
                              [float(np.max(np.abs(resid[N] - s1 * g))) for N in N_list])
