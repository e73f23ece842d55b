"""Declarative experiment runner.

A config is a mapping (YAML or JSON) with the keys in ``CONFIG_KEYS``.
``run`` samples replicas, applies the estimators for the experiment kind,
and writes CSV/JSON/binary outputs plus a manifest into an output
directory that appears only when the run succeeds.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import logging
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import comparison as cmp
from . import extremes as ext
from . import io
from . import samplers as smp
from .centering import M_n, m_N
from .covariance import (covariance_for, deviation_alpha, green_matrix, psi_cov,
                         psi_functional_matrix, psi_variance)
from .errors import ConfigError, FieldError, NumericError
from .geometry import BoxSpec, _log2_exact
from .profile import VarianceProfile, check_assumption, load_profile, make_profile
from .rng import component_id, stream
from .stats import wilson_interval

log = logging.getLogger(__name__)

KINDS = ("covtest", "extremes", "cluster", "tail", "localization", "threefield",
         "surrogate", "compare", "perturb")
MODELS = ("dgff", "psi", "ibrw", "mibrw", "threefield")
CONFIG_KEYS = {"kind", "model", "profile", "N", "replicas", "seed", "z_grid", "r_grid",
               "gamma_grid", "params", "out", "grid", "sweep_cap", "keep_trajectories",
               "workers"}
DEFAULT_SWEEP_CAP = 64
MANIFEST = "manifest.json"


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    kind: str
    model: str
    profile: VarianceProfile
    N: list
    replicas: int
    seed: int
    z_grid: list = field(default_factory=list)
    r_grid: list = field(default_factory=list)
    gamma_grid: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    out: str | None = None
    grid: dict = field(default_factory=dict)
    sweep_cap: int = DEFAULT_SWEEP_CAP
    keep_trajectories: bool = False
    workers: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        body = {k: v for k, v in self.raw.items() if k not in ("out", "workers")}
        body["seed"] = self.seed
        text = json.dumps(body, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _resolve_profile(ref, base: Path | None) -> VarianceProfile:
    if isinstance(ref, dict):
        return make_profile(ref)
    if ref in (None, "constant"):
        return VarianceProfile.constant()
    if ref == "two-speed":
        return VarianceProfile.two_speed()
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = base / path
    if not path.exists():
        raise ConfigError(f"profile: file {ref!r} not found")
    return load_profile(path)


def parse_config(data: dict, base: Path | None = None) -> ExperimentConfig:
    """Validate a raw mapping; all problems are reported together."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    errors = []
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        errors.append(f"unknown keys: {unknown}")
    kind = data.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: expected one of {list(KINDS)}, got {kind!r}")
    model = data.get("model", "psi")
    if model not in MODELS:
        errors.append(f"model: expected one of {list(MODELS)}, got {model!r}")
    Ns = data.get("N", [16])
    Ns = Ns if isinstance(Ns, list) else [Ns]
    if not Ns:
        errors.append("N: grid is empty")
    for N in Ns:
        try:
            _log2_exact(int(N))
            if int(N) != N or N < 4:
                raise ConfigError
        except (ConfigError, TypeError, ValueError):
            errors.append(f"N: {N!r} is not a power of two >= 4")
    replicas = data.get("replicas", 1)
    if not isinstance(replicas, int) or replicas < 1:
        errors.append(f"replicas: must be a positive integer, got {replicas!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        errors.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
    for key in ("z_grid", "r_grid", "gamma_grid"):
        if key in data:
            g = data[key]
            if not isinstance(g, list) or not g:
                errors.append(f"{key}: must be a non-empty list")
            elif not all(isinstance(x, (int, float)) for x in g):
                errors.append(f"{key}: entries must be numbers")
    params = data.get("params", {})
    if not isinstance(params, dict):
        errors.append("params: must be a mapping")
        params = {}
    grid = data.get("grid", {})
    if not isinstance(grid, dict):
        errors.append("grid: must be a mapping")
        grid = {}
    cap = data.get("sweep_cap", DEFAULT_SWEEP_CAP)
    if not isinstance(cap, int) or cap < 1:
        errors.append("sweep_cap: must be a positive integer")
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        errors.append("workers: must be a positive integer")
    profile = None
    try:
        profile = _resolve_profile(data.get("profile"), base)
    except (ConfigError, OSError, ValueError) as exc:
        errors.append(f"profile: {exc}")
    if profile is not None and kind not in ("covtest", "compare"):
        rep = check_assumption(profile)
        if not rep.passed:
            errors.append(f"profile: weak-correlation assumption fails "
                          f"(worst gap {rep.worst_gap:.3g} at x={rep.worst_x:.3g}, "
                          f"sigma(0)={profile.sigma0:.3g}, sigma(1)={profile.sigma1:.3g})")
    if kind == "localization" and model not in ("ibrw", "mibrw"):
        errors.append("model: localization needs ibrw or mibrw trajectories")
    if errors:
        err = ConfigError("invalid config:\n  " + "\n  ".join(errors))
        err.errors = errors
        raise err
    return ExperimentConfig(kind, model, profile, [int(n) for n in Ns], replicas, seed,
                            list(data.get("z_grid", [])), list(data.get("r_grid", [])),
                            list(data.get("gamma_grid", [])), dict(params), data.get("out"),
                            dict(grid), cap, bool(data.get("keep_trajectories", False)),
                            workers, copy.deepcopy(data))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(data, path.parent)


# ----------------------------------------------------------------- sampling

@lru_cache(maxsize=8)
def _functional(N: int, profile: VarianceProfile):
    return psi_functional_matrix(BoxSpec.from_side(N), profile)


@lru_cache(maxsize=4)
def _deviation_alpha(profile: VarianceProfile) -> float:
    return deviation_alpha("psi", profile, [16, 32, 64]).alpha_hat


def _threefield_params(cfg_params: dict, N: int, profile: VarianceProfile):
    p = smp.ThreeFieldParams(N, int(cfg_params.get("K", 2)), int(cfg_params.get("L", 2)),
                             int(cfg_params.get("Kp", 2)), int(cfg_params.get("Lp", 2)),
                             profile)
    delta = float(cfg_params.get("delta", 1.0 / 16))
    pv = psi_variance(BoxSpec.from_side(N), profile)
    alpha = cfg_params.get("alpha_hat", "auto")
    if alpha == "auto":
        p.alpha_hat = smp.minimal_alpha(p, pv, delta)
    elif alpha == "deviation":
        p.alpha_hat = _deviation_alpha(profile)
    else:
        p.alpha_hat = float(alpha)
    match = smp.variance_match_constants(p, pv, delta)
    p.a = match.a
    return p, match


def sample_one(model: str, N: int, profile: VarianceProfile, rng, keep_trajectories=False,
               tf_params=None):
    """One replica: (values N x N, trajectories or None, components dict)."""
    n = _log2_exact(N)
    if model == "dgff":
        return smp.dgff_sample(BoxSpec(n), rng).values[0], None, {}
    if model == "psi":
        b = smp.psi_sample(BoxSpec(n), profile, rng, functional=_functional(N, profile))
        return b.values[0], None, {}
    if model in ("ibrw", "mibrw"):
        f = smp.ibrw_sample if model == "ibrw" else smp.mibrw_sample
        b = f(profile, n, rng, keep_trajectories=keep_trajectories)
        return b.values[0], (b.trajectories[0] if keep_trajectories else None), {}
    if model == "threefield":
        b = smp.three_field_sample(tf_params, rng)
        return b.values[0], None, {k: v[0] for k, v in b.components.items()}
    raise ConfigError(f"unknown model {model!r}")


def _task(args):
    """Worker entry: per-replica statistics for a block of replica indices."""
    (model, N, prof, seed, idx, stat, opts, tf) = args
    profile = VarianceProfile(**prof)
    out = []
    for i in idx:
        rng = stream(seed, i, model)
        keep = stat == "localization"
        vals, traj, comps = sample_one(model, N, profile, rng, keep, tf)
        out.append((i, _replica_stat(stat, vals, traj, comps, N, profile, opts)))
    return out


def _replica_stat(stat, vals, traj, comps, N, profile, opts):
    flat = int(np.argmax(vals))
    rec = {"max": float(vals.flat[flat]), "arg": (flat // N, flat % N)}
    if stat == "cluster":
        c = opts.get("c", 1.0)
        cs = ext.pair_cluster_prob(vals, opts["r_grid"], c)
        rec["hits"] = cs.hits
    elif stat == "localization":
        n = _log2_exact(N)
        hits = {}
        for g in opts["gamma_grid"]:
            tube = ext.TubeSpec(g, n, profile)
            for r in opts["r_grid"]:
                for s in opts["shifts"]:
                    rep = ext.trajectory_localization(vals, traj[None], tube, r, s, N)
                    hits[(g, r, s)] = (rep.near_max, rep.exits)
        rec["loc"] = hits
    elif stat == "fine":
        K = opts["KL"]
        M = N // K
        fine = vals - comps["coarse"]
        rec["fine_max"] = fine.reshape(K, M, K, M).max(axis=(1, 3)).ravel()
    elif stat == "field":
        rec["values"] = vals
    return rec


def replicate(model: str, N: int, profile: VarianceProfile, seed: int, replicas: int,
              stat: str = "max", opts: dict | None = None, workers: int = 1, tf=None):
    """Per-replica records in replica order; independent of ``workers``."""
    opts = opts or {}
    prof = {"kind": profile.kind, "breakpoints": profile.breakpoints, "values": profile.values}
    blocks = np.array_split(np.arange(replicas), max(1, min(replicas, 4 * workers)))
    jobs = [(model, N, prof, seed, [int(i) for i in b], stat, opts, tf) for b in blocks if len(b)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_task, jobs))
    else:
        parts = [_task(j) for j in jobs]
    recs = sorted((r for p in parts for r in p), key=lambda t: t[0])
    return [r for _, r in recs]


# --------------------------------------------------------------- run context

class _Run:
    def __init__(self, cfg: ExperimentConfig, staging: Path):
        self.cfg = cfg
        self.dir = staging
        self.stages: dict = {}
        self.streams: dict = {}
        self.files: list = []
        self.summary: dict = {}

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        except FieldError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise NumericError(f"stage {name}: {exc}") from exc
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            raise NumericError(f"stage {name}: {exc}") from exc
        finally:
            self.stages[name] = round(time.perf_counter() - t, 6)

    def used(self, component: str, count: int):
        self.streams[component] = self.streams.get(component, 0) + int(count)

    def json(self, name: str, obj):
        self.files.append(io.write_json(self.dir / name, obj).name)

    def csv(self, name: str, rows):
        self.files.append(io.write_csv(self.dir / name, rows).name)

    def binary(self, name: str, values, model: str, params=None):
        io.write_field(self.dir / name, values, model, self.cfg.seed, params=params)
        self.files += [name, name + ".json"]


def _pre_registered_entries(N: int) -> list[tuple[int, int]]:
    """Diagonal sample plus lags from the center; fixed before sampling."""
    c = N // 2
    idx = lambda x, y: x * N + y
    diag = [idx(x, y) for x in range(1, N - 1, max(1, (N - 2) // 4))
            for y in range(1, N - 1, max(1, (N - 2) // 4))]
    ent = [(i, i) for i in diag]
    for lag in (1, 2, N // 4):
        if c + lag < N - 1:
            ent.append((idx(c, c), idx(c + lag, c)))
            ent.append((idx(c, c), idx(c, c + lag)))
    return ent


def _exact_cov(model: str, N: int, profile: VarianceProfile, tf=None) -> np.ndarray:
    if model == "threefield":
        return smp.three_field_cov(tf)
    return covariance_for(model, BoxSpec.from_side(N), profile)


def _kind_covtest(ctx: _Run):
    cfg = ctx.cfg
    rows, report = [], {}
    for N in cfg.N:
        tf = None
        if cfg.model == "threefield":
            tf, _ = _threefield_params(cfg.params, N, cfg.profile)
        with ctx.stage(f"sample-N{N}"):
            recs = replicate(cfg.model, N, cfg.profile, cfg.seed, cfg.replicas, "field",
                             workers=cfg.workers, tf=tf)
            ctx.used(cfg.model, cfg.replicas)
        with ctx.stage(f"exact-N{N}"):
            C = _exact_cov(cfg.model, N, cfg.profile, tf)
        X = np.stack([r["values"].ravel() for r in recs])
        zmax = 0.0
        for u, v in _pre_registered_entries(N):
            emp = float(X[:, u] @ X[:, v] / len(X))
            se = math.sqrt((C[u, u] * C[v, v] + C[u, v] ** 2) / len(X))
            z = abs(emp - C[u, v]) / se if se > 0 else (0.0 if emp == C[u, v] else math.inf)
            zmax = max(zmax, z)
            rows.append({"N": N, "u": u, "v": v, "exact": C[u, v], "empirical": emp,
                         "se": se, "z": z})
        rep = {"max_z": zmax, "pass": zmax <= 4.0}
        if cfg.model == "psi" and cfg.profile == VarianceProfile.constant() and N <= 64:
            with ctx.stage(f"identity-N{N}"):
                spec = BoxSpec.from_side(N)
                diff = float(np.max(np.abs(psi_cov(spec, cfg.profile).matrix
                                           - green_matrix(spec).matrix)))
            rep["psi_vs_green_maxnorm"] = diff
            rep["identity_exact"] = diff <= 1e-9
        report[str(N)] = rep
    ctx.csv("covtest_entries.csv", rows)
    ctx.json("covtest.json", report)
    ctx.summary = {"max_z": max(r["max_z"] for r in report.values())}


def _maxima(ctx: _Run, N: int, stat="max", opts=None, tf=None):
    cfg = ctx.cfg
    with ctx.stage(f"sample-N{N}"):
        recs = replicate(cfg.model, N, cfg.profile, cfg.seed, cfg.replicas, stat, opts,
                         cfg.workers, tf)
        ctx.used(cfg.model, cfg.replicas)
    return recs


def _kind_extremes(ctx: _Run):
    cfg = ctx.cfg
    report, rows = {}, []
    for N in cfg.N:
        tf = _threefield_params(cfg.params, N, cfg.profile)[0] if cfg.model == "threefield" else None
        recs = _maxima(ctx, N, tf=tf)
        mx = np.array([r["max"] for r in recs])
        stats = ext.MaxStats(mx, np.array([r["arg"] for r in recs]), m_N(N))
        for i, r in enumerate(recs):
            rows.append({"N": N, "replica": i, "max": r["max"], "argx": r["arg"][0],
                         "argy": r["arg"][1], "centered": r["max"] - m_N(N)})
        rep = {"summary": stats.to_dict(), "iqr": stats.iqr()}
        with ctx.stage(f"estimate-N{N}"):
            if len(cfg.z_grid) >= 2:
                rep["tail"] = ext.tail_slope(stats.centered, cfg.z_grid).to_dict()
            if len(mx) >= 20:
                rep["shape"] = ext.gumbel_mixture_shape(stats.centered).to_dict()
        report[str(N)] = rep
    ctx.csv("maxima.csv", rows)
    ctx.json("extremes.json", report)
    ctx.summary = {f"median_N{N}": report[str(N)]["summary"]["q50"] for N in cfg.N}


def _kind_tail(ctx: _Run):
    cfg = ctx.cfg
    if len(cfg.z_grid) < 2:
        raise ConfigError("z_grid: tail needs at least two points")
    N = cfg.N[-1]
    recs = _maxima(ctx, N)
    c = np.array([r["max"] for r in recs]) - m_N(N)
    with ctx.stage("estimate"):
        tail = ext.tail_slope(c, cfg.z_grid, int(cfg.params.get("min_exceed", 50)))
        shape = ext.gumbel_mixture_shape(c) if len(c) >= 20 else None
    ctx.csv("tail.csv", tail.csv_rows())
    ctx.json("tail.json", {"tail": tail.to_dict(), "shape": shape.to_dict() if shape else None})
    ctx.summary = {"slope": tail.slope}


def _kind_cluster(ctx: _Run):
    cfg = ctx.cfg
    if not cfg.r_grid:
        raise ConfigError("r_grid: cluster needs a non-empty r grid")
    N = cfg.N[-1]
    c = float(cfg.params.get("c", 1.0))
    recs = _maxima(ctx, N, "cluster", {"r_grid": cfg.r_grid, "c": c})
    hits = np.sum([r["hits"] for r in recs], axis=0)
    p, lo, hi = wilson_interval(hits, len(recs))
    thr = [m_N(N) - c * math.log(math.log(r)) for r in cfg.r_grid]
    rows = [{"r": r, "estimate": float(p[i]), "lower": float(lo[i]), "upper": float(hi[i]),
             "hits": int(hits[i]), "threshold": thr[i]} for i, r in enumerate(cfg.r_grid)]
    ctx.csv("cluster.csv", rows)
    ctx.json("cluster.json", {"N": N, "c": c, "replicas": len(recs), "rows": rows})
    ctx.summary = {f"p_r{r}": float(p[i]) for i, r in enumerate(cfg.r_grid)}


def _kind_localization(ctx: _Run):
    cfg = ctx.cfg
    N = cfg.N[-1]
    gam = cfg.gamma_grid or [0.6]
    rs = cfg.r_grid or [4]
    shifts = [float(s) for s in cfg.params.get("shifts", [0.0])]
    recs = _maxima(ctx, N, "localization", {"gamma_grid": gam, "r_grid": rs, "shifts": shifts})
    rows = []
    n = _log2_exact(N)
    for g in gam:
        for r in rs:
            for s in shifts:
                near = sum(rec["loc"][(g, r, s)][0] for rec in recs)
                exits = sum(rec["loc"][(g, r, s)][1] for rec in recs)
                p, lo, hi = wilson_interval(exits, len(recs))
                tmin, tmax = ext.localization_window(n, r)
                rows.append({"gamma": g, "r": r, "shift": s, "window_lo": tmin,
                             "window_hi": tmax, "near_max": near, "exits": exits,
                             "fraction": exits / near if near else 0.0,
                             "estimate": float(p), "lower": float(lo), "upper": float(hi)})
    ctx.csv("localization.csv", rows)
    ctx.json("localization.json", {"N": N, "model": cfg.model, "rows": rows})
    if cfg.keep_trajectories:
        rng = stream(cfg.seed, 0, cfg.model)
        vals, traj, _ = sample_one(cfg.model, N, cfg.profile, rng, True)
        ctx.binary("trajectories_r0.bin", traj, cfg.model, {"replica": 0, "levels": n + 1})
    ctx.summary = {"rows": len(rows)}


def _kind_threefield(ctx: _Run):
    cfg = ctx.cfg
    out = []
    for N in cfg.N:
        with ctx.stage(f"match-N{N}"):
            tf, match = _threefield_params(cfg.params, N, cfg.profile)
        out.append({"N": N, "K": tf.K, "L": tf.L, "Kp": tf.Kp, "Lp": tf.Lp,
                    "alpha_hat": tf.alpha_hat, "mean_abs_gap": match.mean_abs_gap,
                    "max_a": match.max_a, "bound": match.bound,
                    "bound_ok": match.max_a <= match.bound + 1e-12})
    ctx.csv("threefield.csv", out)
    ctx.json("threefield.json", {"rows": out, "a": [tf.a.tolist()]})
    ctx.summary = {"mean_abs_gap": out[-1]["mean_abs_gap"]}


def surrogate_experiment(N: int, params: dict, profile: VarianceProfile, seed: int,
                         replicas: int, workers: int = 1, gamma: float = 0.6,
                         z_list=(2.0, 3.0), surrogate_count: int = 200_000) -> dict:
    """Centered max of S^N against G* with beta estimated from the fine field."""
    tf, match = _threefield_params(params, N, profile)
    n = _log2_exact(N)
    recs = replicate("threefield", N, profile, seed, replicas, "fine", {"KL": tf.coarse},
                     workers, tf)
    mx = np.array([r["max"] for r in recs])
    fine = np.concatenate([r["fine_max"] for r in recs])
    beta = ext.beta_star_estimate(fine, tf.kbar, gamma, list(z_list), profile, n,
                                  small_side=tf.small)
    out = {"N": N, "K": tf.K, "L": tf.L, "Kp": tf.Kp, "Lp": tf.Lp, "alpha_hat": tf.alpha_hat,
           "beta": beta.to_dict(), "replicas": replicas}
    centered = mx - M_n(0, n, profile, n)
    try:
        b = beta.value()
    except FieldError as exc:
        out["error"] = str(exc)
        return out
    sp = smp.SurrogateParams(tf.K, tf.L, b, profile.sigma0, gamma)
    draw = smp.surrogate_sample(sp, stream(seed, 0, "surrogate"), surrogate_count)
    g = draw.gstar[~draw.empty]
    out.update({"beta_hat": b, "raw_probability": sp.raw_probability(),
                "probability": sp.probability(), "empty_fraction": float(draw.empty.mean()),
                "D_positive": bool(np.all(draw.D > 0)),
                "ks": ext.dist_distance(centered, g, "ks"),
                "median_centered": float(np.median(centered)),
                "median_gstar": float(np.median(g)) if len(g) else None})
    return out


def _kind_surrogate(ctx: _Run):
    cfg = ctx.cfg
    rows = []
    ladder = cfg.params.get("ladder") or [{"N": N} for N in cfg.N]
    for i, step in enumerate(ladder):
        p = {**cfg.params, **step}
        p.pop("ladder", None)
        N = int(p.pop("N", cfg.N[-1]))
        with ctx.stage(f"surrogate-{i}"):
            rows.append(surrogate_experiment(N, p, cfg.profile, cfg.seed, cfg.replicas,
                                             cfg.workers,
                                             float(cfg.params.get("gamma", 0.6)),
                                             surrogate_count=int(cfg.params.get("surrogate_count",
                                                                                200_000))))
        ctx.used("threefield", cfg.replicas)
    ctx.json("surrogate.json", rows)
    ctx.csv("surrogate.csv", [{k: r.get(k) for k in ("N", "K", "L", "Kp", "Lp", "beta_hat",
                                                      "raw_probability", "ks")} for r in rows])
    ctx.summary = {"ks": [r.get("ks") for r in rows]}


def _kind_compare(ctx: _Run):
    cfg = ctx.cfg
    count = int(cfg.params.get("instances", 10))
    dim = int(cfg.params.get("dim", 8))
    reps = cfg.replicas
    verdicts = []
    with ctx.stage("slepian"):
        for i in range(count):
            rng = stream(cfg.seed, i, "slepian")
            inst = cmp.random_slepian_instance(dim, rng)
            verdicts.append(cmp.slepian_check(inst, float(rng.uniform(-1, 2)), reps, rng)
                            .to_dict())
    with ctx.stage("sudakov-fernique"):
        for i in range(count):
            rng = stream(cfg.seed, i, "sudakov-fernique")
            verdicts.append(cmp.sudakov_fernique_check(cmp.random_sf_instance(dim, rng),
                                                       reps, rng).to_dict())
    ctx.used("slepian", count)
    ctx.used("sudakov-fernique", count)
    ctx.json("verdicts.json", verdicts)
    ctx.summary = {"violations": sum(not v["passed"] for v in verdicts)}


def _kind_perturb(ctx: _Run):
    cfg = ctx.cfg
    N = cfg.N[-1]
    s = cfg.params.get("s", [0.5, 0.5])
    rs = cfg.r_grid or [4, 8, 16]
    pairs = cfg.params.get("pairs") or [[r, r] for r in rs]
    prof = cfg.profile
    model = cfg.model

    def base(rng):
        return sample_one(model, N, prof, rng)[0]

    with ctx.stage("perturb"):
        rep = cmp.perturbation_shift_experiment(base, N, s, [tuple(p) for p in pairs],
                                                cfg.replicas, cfg.seed,
                                                lp=bool(cfg.params.get("levy_prokhorov", True)))
    ctx.used("base", cfg.replicas)
    ctx.used("reference", cfg.replicas)
    ctx.csv("perturb.csv", rep.csv_rows())
    ctx.json("perturb.json", rep.to_dict())
    ctx.summary = {"ks": rep.ks}


_KINDS = {"covtest": _kind_covtest, "extremes": _kind_extremes, "tail": _kind_tail,
          "cluster": _kind_cluster, "localization": _kind_localization,
          "threefield": _kind_threefield, "surrogate": _kind_surrogate,
          "compare": _kind_compare, "perturb": _kind_perturb}


# ------------------------------------------------------------------- runners

def _staging_for(out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))


def _finalize(staging: Path, out: Path):
    if out.exists():
        if any(out.iterdir()):
            raise ConfigError(f"output directory {out} exists and is not empty")
        out.rmdir()
    os.replace(staging, out)


def run(cfg: ExperimentConfig, out=None) -> dict:
    """Execute one experiment; returns the manifest."""
    out = Path(out or cfg.out or "results")
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} exists and is not empty")
    staging = _staging_for(out)
    ctx = _Run(cfg, staging)
    try:
        _KINDS[cfg.kind](ctx)
        ctx.json("summary.json", ctx.summary)
        manifest = {
            "config_hash": cfg.digest(),
            "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "kind": cfg.kind,
            "model": cfg.model,
            "seed": cfg.seed,
            "workers": cfg.workers,
            "stages": ctx.stages,
            "rng": {"seed": cfg.seed, "streams": ctx.streams,
                    "component_ids": {k: component_id(k) for k in ctx.streams}},
            "files": {f: io.sha256_file(staging / f) for f in sorted(ctx.files)},
            "config": cfg.raw,
        }
        io.write_json(staging / MANIFEST, manifest)
        _finalize(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    manifest["out"] = str(out)
    return manifest


def _set_path(d: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    if not cfg.grid:
        raise ConfigError("grid: sweep needs a non-empty parameter grid")
    keys = sorted(cfg.grid)
    values = []
    for k in keys:
        v = cfg.grid[k]
        if not isinstance(v, list) or not v:
            raise ConfigError(f"grid.{k}: must be a non-empty list")
        values.append(v)
    size = math.prod(len(v) for v in values)
    if size > cfg.sweep_cap:
        raise ConfigError(f"grid: {size} points exceed sweep_cap {cfg.sweep_cap}")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def sweep(cfg: ExperimentConfig, out=None) -> list[dict]:
    """One run per grid point with seed = base seed XOR point index."""
    points = sweep_points(cfg)
    out = Path(out or cfg.out or "sweep")
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} exists and is not empty")
    staging = _staging_for(out)
    manifests, rows = [], []
    try:
        for i, pt in enumerate(points):
            raw = copy.deepcopy(cfg.raw)
            raw.pop("grid", None)
            raw.pop("sweep_cap", None)
            raw["workers"] = cfg.workers
            for k, v in pt.items():
                _set_path(raw, k, v)
            raw["seed"] = cfg.seed ^ i
            sub = parse_config(raw)
            m = run(sub, staging / f"point_{i:03d}")
            summary = io.read_json(staging / f"point_{i:03d}" / "summary.json")
            rows.append({"point": i, "seed": sub.seed,
                         **{k: json.dumps(v) for k, v in pt.items()},
                         **{k: json.dumps(v) if isinstance(v, (list, dict)) else v
                            for k, v in summary.items()}})
            m["out"] = str(out / f"point_{i:03d}")
            manifests.append(m)
        io.write_csv(staging / "summary.csv", rows)
        _finalize(staging, out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return manifests


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.exists():
        raise ConfigError(f"no manifest at {path}")
    return io.read_json(path)


def verify_manifest(path) -> dict:
    """Recompute digests; returns {file: ok}."""
    path = Path(path)
    root = path if path.is_dir() else path.parent
    m = read_manifest(path)
    return {f: io.sha256_file(root / f) == d for f, d in m["files"].items()}
