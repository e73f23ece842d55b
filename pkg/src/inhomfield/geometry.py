"""Lattice geometry: the box V_N, scale boxes, torus distances, partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, DomainError


def _log2_exact(x: int) -> int:
    if x < 1 or x & (x - 1):
        raise ConfigError(f"{x} is not a power of two")
    return x.bit_length() - 1


@dataclass(frozen=True)
class BoxSpec:
    """The lattice box V_N = [0, N)^2 with N = 2**n.

    ``delta`` is the margin fraction defining V_N^delta.
    """

    n: int
    delta: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if not 0.0 <= self.delta < 0.5:
            raise ConfigError("delta must lie in [0, 1/2)")

    @classmethod
    def from_side(cls, N: int, delta: float = 0.0) -> "BoxSpec":
        return cls(_log2_exact(int(N)), delta)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def size(self) -> int:
        return self.N * self.N

    def index(self, v) -> int:
        x, y = v
        return int(x) * self.N + int(y)

    def point(self, i: int) -> tuple[int, int]:
        return divmod(int(i), self.N)

    def contains(self, v) -> bool:
        return 0 <= v[0] < self.N and 0 <= v[1] < self.N

    def interior_mask(self) -> np.ndarray:
        m = np.zeros((self.N, self.N), dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask()

    def bulk_mask(self, delta: float | None = None) -> np.ndarray:
        """Mask of V_N^delta = (delta N, (1 - delta) N)^2, open interval."""
        d = self.delta if delta is None else delta
        c = np.arange(self.N)
        ok = (c > d * self.N) & (c < (1.0 - d) * self.N)
        return ok[:, None] & ok[None, :]


@dataclass(frozen=True)
class ScaleBox:
    """Closed rectangle [x0, x1] x [y0, y1] around ``center``."""

    center: tuple[int, int]
    lam: float
    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x1 - self.x0 + 1, self.y1 - self.y0 + 1)

    def contains(self, v) -> bool:
        return self.x0 <= v[0] <= self.x1 and self.y0 <= v[1] <= self.y1

    def is_interior(self, v) -> bool:
        """True when v is off the outer ring of the rectangle."""
        return self.x0 < v[0] < self.x1 and self.y0 < v[1] < self.y1

    def points(self) -> list[tuple[int, int]]:
        return [(x, y) for x in range(self.x0, self.x1 + 1)
                for y in range(self.y0, self.y1 + 1)]


def half_width(N: int, lam: float) -> int:
    """Half side of the scale box, floor(N^(1-lam) / 2)."""
    return int(math.floor(0.5 * N ** (1.0 - lam) + 1e-9))


def scale_box(v, lam: float, spec: BoxSpec) -> ScaleBox:
    N = spec.N
    if not spec.contains(v):
        raise DomainError(f"vertex {tuple(v)} outside V_{N}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError("scale must lie in [0, 1]")
    x, y = int(v[0]), int(v[1])
    if lam == 0.0:
        return ScaleBox((x, y), lam, 0, N - 1, 0, N - 1)
    h = half_width(N, lam)
    return ScaleBox((x, y), lam, max(0, x - h), min(N - 1, x + h),
                    max(0, y - h), min(N - 1, y + h))


def torus_distance(u, v, N: int) -> tuple[float, int]:
    """Euclidean and sup distance on the torus (Z / N Z)^2."""
    dx = abs(int(u[0]) - int(v[0])) % N
    dy = abs(int(u[1]) - int(v[1])) % N
    dx = min(dx, N - dx)
    dy = min(dy, N - dy)
    return math.hypot(dx, dy), max(dx, dy)


def torus_axis_gaps(N: int) -> np.ndarray:
    """Matrix of cyclic gaps min(|i-j|, N-|i-j|) for i, j in [0, N)."""
    c = np.arange(N)
    d = np.abs(c[:, None] - c[None, :])
    return np.minimum(d, N - d)


@dataclass(frozen=True)
class Partition:
    """Partition of V_N into square cells of a given side."""

    N: int
    side: int
    corners: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.side < 1 or self.N % self.side:
            raise ConfigError(f"cell side {self.side} does not divide {self.N}")
        m = self.N // self.side
        ij = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"), -1)
        object.__setattr__(self, "corners", ij.reshape(-1, 2) * self.side)

    @property
    def cells_per_axis(self) -> int:
        return self.N // self.side

    def __len__(self) -> int:
        return self.cells_per_axis ** 2

    def cell_index(self) -> np.ndarray:
        """N x N array of the row-major cell index of every vertex."""
        c = np.arange(self.N) // self.side
        return c[:, None] * self.cells_per_axis + c[None, :]

    def residue(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of every vertex relative to its cell corner."""
        c = np.arange(self.N) % self.side
        return np.broadcast_to(c[:, None], (self.N, self.N)), \
            np.broadcast_to(c[None, :], (self.N, self.N))


def dyadic_partition(n: int, k: int) -> Partition:
    """The family BD_k of side-2^k squares restricted to V_{2^n}."""
    return Partition(1 << n, 1 << k)


def shrunk_cells_mask(N: int, side: int, delta: float) -> np.ndarray:
    """Union over cells of side ``side`` of the delta-shrunk cells.

    A vertex is kept when its lattice distance to the outer vertex boundary
    of its cell (the vertices just outside the cell) is at least delta*side.
    """
    r = np.arange(N) % side
    dist = np.minimum(r + 1, side - r)
    keep = dist >= delta * side
    return keep[:, None] & keep[None, :]


def restricted_set(spec: BoxSpec, K: int, L: int, delta: float) -> np.ndarray:
    """Boolean N x N mask of V*_{N, delta} for the (K, L) box families."""
    N = spec.N
    sides = []
    for s in (N // L if L and N % L == 0 else 0,
              N // (K * L) if K * L and N % (K * L) == 0 else 0,
              L, K * L):
        if s < 2 or N % s or s & (s - 1):
            raise ConfigError(f"box side {s} invalid for N={N}, K={K}, L={L}")
        sides.append(s)
    if not 0.0 <= delta < 0.5:
        raise ConfigError("delta must lie in [0, 1/2)")
    mask = np.ones((N, N), dtype=bool)
    for s in sides:
        mask &= shrunk_cells_mask(N, s, delta)
    return mask


def pairs_within(points: Iterable, lo: float, hi: float):
    """All index pairs i < j whose Euclidean distance lies in [lo, hi]."""
    pts = np.asarray(list(points), dtype=float)
    out = []
    for i in range(len(pts)):
        d = np.hypot(*(pts[i + 1:] - pts[i]).T)
        for j in np.nonzero((d >= lo) & (d <= hi))[0]:
            out.append((i, i + 1 + int(j)))
    return out
