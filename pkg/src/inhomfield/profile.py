"""Variance profiles sigma(s) on [0, 1] and their cumulative integrals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DomainError, NumericError

STEP = "step"
LINEAR = "piecewise-linear"
NORM_TOL = 1e-12


@dataclass(frozen=True)
class VarianceProfile:
    """Speed function sigma on [0, 1].

    For ``kind == "step"`` there is one value per interval
    [b_i, b_{i+1}) (right-continuous, the last interval closed at 1).
    For ``kind == "piecewise-linear"`` there is one value per breakpoint.
    """

    kind: str
    breakpoints: tuple
    values: tuple
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if self.kind not in (STEP, LINEAR):
            raise ConfigError(f"unknown profile kind {self.kind!r}")
        if b.ndim != 1 or len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0:
            raise ConfigError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ConfigError("breakpoints must be strictly increasing")
        want = len(b) - 1 if self.kind == STEP else len(b)
        if len(v) != want:
            raise ConfigError(f"{self.kind} profile needs {want} values")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ConfigError("sigma values must be finite and non-negative")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        seg = np.array([self._segment_integral(i, b[i], b[i + 1], 2)
                        for i in range(len(b) - 1)])
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    # -- construction helpers
    @classmethod
    def constant(cls) -> "VarianceProfile":
        return cls(STEP, (0.0, 1.0), (1.0,))

    @classmethod
    def two_speed(cls, var0: float = 0.5, var1: float = 1.5,
                  split: float = 0.5) -> "VarianceProfile":
        """Step profile with sigma^2 = var0 before ``split`` and var1 after."""
        return cls(STEP, (0.0, split, 1.0), (np.sqrt(var0), np.sqrt(var1)))

    def normalized(self) -> "VarianceProfile":
        total = self.I(0.0, 1.0)
        if total <= 0:
            raise NumericError("cannot normalize a zero profile")
        s = 1.0 / np.sqrt(total)
        return VarianceProfile(self.kind, self.breakpoints,
                               tuple(x * s for x in self.values))

    # -- evaluation
    @property
    def is_step(self) -> bool:
        return self.kind == STEP

    @property
    def sigma0(self) -> float:
        return self.values[0]

    @property
    def sigma1(self) -> float:
        return self.values[-1]

    def _locate(self, s: float) -> int:
        i = int(np.searchsorted(self.breakpoints, s, side="right")) - 1
        return min(max(i, 0), len(self.breakpoints) - 2)

    def sigma(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any((s_arr < 0) | (s_arr > 1)):
            raise DomainError("profile argument outside [0, 1]")
        b = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        if self.is_step:
            idx = np.clip(np.searchsorted(b, s_arr, side="right") - 1, 0, len(v) - 1)
            out = v[idx]
        else:
            out = np.interp(s_arr, b, v)
        return out if out.ndim else float(out)

    def _segment_integral(self, i: int, a: float, c: float, power: int) -> float:
        """Integral of sigma**power over [a, c] inside segment i."""
        if c <= a:
            return 0.0
        if self.is_step:
            return self.values[i] ** power * (c - a)
        b0, b1 = self.breakpoints[i], self.breakpoints[i + 1]
        v0, v1 = self.values[i], self.values[i + 1]
        slope = (v1 - v0) / (b1 - b0)
        p, q = v0 + slope * (a - b0), v0 + slope * (c - b0)
        if power == 1:
            return 0.5 * (p + q) * (c - a)
        return (p * p + p * q + q * q) * (c - a) / 3.0

    def _integral(self, a: float, c: float, power: int) -> float:
        if a > c:
            raise DomainError("integral bounds must satisfy a <= b")
        if a < 0 or c > 1:
            raise DomainError("integral bounds must lie in [0, 1]")
        b = self.breakpoints
        total = 0.0
        for i in range(self._locate(a), len(b) - 1):
            lo, hi = max(a, b[i]), min(c, b[i + 1])
            if lo >= c:
                break
            total += self._segment_integral(i, lo, hi, power)
        return total

    def I(self, a: float, b: float | None = None) -> float:
        """Integral of sigma^2; ``I(x)`` means the integral over [0, x]."""
        if b is None:
            a, b = 0.0, a
        return self._integral(float(a), float(b), 2)

    def I_vec(self, x) -> np.ndarray:
        """Vectorised I(0, x) using the cached cumulative table."""
        x = np.asarray(x, dtype=float)
        return np.vectorize(lambda t: self.I(0.0, t))(x) if not self.is_step \
            else self._I_step_vec(x)

    def _I_step_vec(self, x: np.ndarray) -> np.ndarray:
        b = np.asarray(self.breakpoints)
        v2 = np.asarray(self.values) ** 2
        idx = np.clip(np.searchsorted(b, x, side="right") - 1, 0, len(v2) - 1)
        return self._cum[idx] + v2[idx] * (x - b[idx])

    def J(self, a: float, b: float) -> float:
        """Integral of sigma (not squared) over [a, b]."""
        return self._integral(float(a), float(b), 1)

    def level_weights(self, n: int) -> np.ndarray:
        """w[k] = n * J((n-k-1)/n, (n-k)/n) for the dyadic level k = 0..n-1.

        Level k is the side-2^k box family; coarse levels sit near s = 0.
        """
        return np.array([n * self.J((n - k - 1) / n, (n - k) / n)
                         for k in range(n)])

    def scales(self) -> list[float]:
        return list(self.breakpoints)

    # -- serialisation
    def to_dict(self) -> dict:
        return {"kind": self.kind, "breakpoints": list(self.breakpoints),
                "values": list(self.values)}


def make_profile(data: dict) -> VarianceProfile:
    """Build a profile from a mapping with kind/breakpoints/values/normalize."""
    allowed = {"kind", "breakpoints", "values", "normalize"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown profile keys: {sorted(extra)}")
    for key in ("kind", "breakpoints", "values"):
        if key not in data:
            raise ConfigError(f"profile missing key {key!r}")
    prof = VarianceProfile(data["kind"], tuple(data["breakpoints"]), tuple(data["values"]))
    if data.get("normalize", False):
        return prof.normalized()
    if abs(prof.I(1.0) - 1.0) > NORM_TOL:
        raise ConfigError(f"profile integral I(1) = {prof.I(1.0)!r} != 1; "
                          "set normalize: true to rescale")
    return prof


def load_profile(path) -> VarianceProfile:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("profile file must contain a mapping")
    return make_profile(data)


@dataclass
class AssumptionReport:
    below_diagonal: bool
    sigma0_below_one: bool
    sigma1_above_one: bool
    normalized: bool
    worst_gap: float
    worst_x: float

    @property
    def passed(self) -> bool:
        return (self.below_diagonal and self.sigma0_below_one
                and self.sigma1_above_one and self.normalized)


def check_assumption(profile: VarianceProfile, grid_resolution: int = 1024,
                     margin: float = 1e-9) -> AssumptionReport:
    """Weak-correlation check: I(x) < x inside (0, 1), sigma(0) < 1 < sigma(1)."""
    x = np.arange(1, grid_resolution) / grid_resolution
    gap = x - profile.I_vec(x)
    j = int(np.argmin(gap))
    return AssumptionReport(
        below_diagonal=bool(np.all(gap > margin)),
        sigma0_below_one=profile.sigma0 < 1.0,
        sigma1_above_one=profile.sigma1 > 1.0,
        normalized=abs(profile.I(1.0) - 1.0) <= NORM_TOL,
        worst_gap=float(gap[j]),
        worst_x=float(x[j]),
    )


def _fine_grid(profile: VarianceProfile, points: int) -> np.ndarray:
    x = np.linspace(0.0, 1.0, points + 1)
    return np.union1d(x, np.asarray(profile.breakpoints))


def _upper_envelope(profile, nodes, xs, Ixs):
    """Greedy chords through nodes staying above I; returns node values."""
    u = [0.0]
    for a, c in zip(nodes[:-1], nodes[1:]):
        sel = (xs > a) & (xs <= c)
        slope = np.max((Ixs[sel] - u[-1]) / (xs[sel] - a))
        u.append(u[-1] + max(slope, 0.0) * (c - a))
    return np.array(u)


def _lower_lines(xs, Ixs, centers):
    """Slopes/intercepts of lines below I: ends pinned at (0,0) and (1,1)."""
    inner = (xs > 0) & (xs < 1)
    lines = [(float(np.min(Ixs[inner] / xs[inner])), 0.0)]
    b = float(np.max((1 - Ixs[inner]) / (1 - xs[inner])))
    lines.append((b, 1.0 - b))
    for c in centers:
        ic = np.interp(c, xs, Ixs)
        right, left = xs > c, xs < c
        hi = np.min((Ixs[right] - ic) / (xs[right] - c))
        lo = np.max((ic - Ixs[left]) / (c - xs[left]))
        if lo <= hi:
            s = 0.5 * (lo + hi)
            lines.append((float(s), float(ic - s * c)))
    return lines


def _lines_to_step(lines) -> VarianceProfile:
    """Pointwise max of lines on [0, 1] (convex) as a step profile of slopes."""
    x = 0.0
    cur = max(lines, key=lambda st: (st[1], -st[0]))
    bps, slopes = [0.0], []
    while True:
        nxt, at = None, 1.0
        for s, t in lines:
            if s > cur[0]:
                c = (cur[1] - t) / (s - cur[0])
                if x < c < at or (c == at and nxt is not None and s > nxt[0]):
                    nxt, at = (s, t), c
        slopes.append(cur[0])
        bps.append(at)
        if nxt is None:
            break
        x, cur = at, nxt
    bps[-1] = 1.0
    return VarianceProfile(STEP, tuple(bps), tuple(np.sqrt(np.maximum(slopes, 0.0))))


def step_envelopes(profile: VarianceProfile, M: int, verify_points: int = 1000,
                   resolution: int = 20000):
    """Step profiles s1, s2 with I_{s1} <= I <= I_{s2} < x, both normalized."""
    report = check_assumption(profile)
    if not report.passed:
        raise ConfigError(f"profile fails the weak-correlation assumption: {report}")
    if profile.is_step:
        return profile, profile
    if M < 2:
        raise ConfigError("need at least two levels")
    xs = _fine_grid(profile, resolution)
    Ixs = profile.I_vec(xs)
    nodes = np.linspace(0.0, 1.0, M + 1)
    u = _upper_envelope(profile, nodes, xs, Ixs)
    if abs(u[-1] - 1.0) > 1e-9:
        raise NumericError(f"upper envelope overshoots: I2(1) = {u[-1]:.6g} with M={M}")
    u[-1] = 1.0
    upper = VarianceProfile(STEP, tuple(nodes), tuple(np.sqrt(np.diff(u) / np.diff(nodes))))
    lower = _lines_to_step(_lower_lines(xs, Ixs, np.linspace(0, 1, M)[1:-1]))
    upper, lower = upper.normalized(), lower.normalized()
    g = np.arange(1, verify_points) / verify_points
    I, I1, I2 = profile.I_vec(g), lower.I_vec(g), upper.I_vec(g)
    tol = 1e-9
    if not (np.all(I1 <= I + tol) and np.all(I <= I2 + tol) and np.all(I2 < g)):
        raise NumericError(f"envelopes failed verification with M={M}: "
                           f"max(I1-I)={np.max(I1 - I):.3g}, "
                           f"max(I-I2)={np.max(I - I2):.3g}, "
                           f"max(I2-x)={np.max(I2 - g):.3g}")
    return lower, upper
