"""Command line entry point: run, sweep, validate-config, show-manifest."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from . import harness
from .errors import ConfigError, FieldError, NumericError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    raw = dict(cfg.raw)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        raw["workers"] = args.workers
    if getattr(args, "keep_trajectories", False):
        raw["keep_trajectories"] = True
    if getattr(args, "out", None) is not None:
        raw["out"] = args.out
    from pathlib import Path
    return harness.parse_config(raw, Path(args.config).parent)


def _cmd_run(args) -> int:
    m = harness.run(_load(args))
    print(f"wrote {m['out']} (config {m['config_hash'][:12]})")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    ms = harness.sweep(_load(args))
    print(f"wrote {len(ms)} points")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"ok: kind={cfg.kind} model={cfg.model} N={cfg.N} replicas={cfg.replicas} "
          f"hash={cfg.digest()[:12]}")
    return EXIT_OK


def _cmd_manifest(args) -> int:
    m = harness.read_manifest(args.path)
    if args.verify:
        checks = harness.verify_manifest(args.path)
        m = {**m, "verified": checks}
        bad = [f for f, ok in checks.items() if not ok]
        if bad:
            print(json.dumps(m, indent=2, sort_keys=True))
            print(f"digest mismatch: {bad}", file=sys.stderr)
            return EXIT_NUMERIC
    print(json.dumps(m, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inhomfield", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="YAML or JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--workers", type=int, help="worker processes")
        if out:
            sp.add_argument("--out", help="output directory (must not exist or be empty)")
            sp.add_argument("--keep-trajectories", action="store_true")

    common(sub.add_parser("run", help="run one experiment"))
    common(sub.add_parser("sweep", help="run a parameter grid"))
    common(sub.add_parser("validate-config", help="check a config without running"), out=False)
    sm = sub.add_parser("show-manifest", help="print a result manifest")
    sm.add_argument("path", help="result directory or manifest.json")
    sm.add_argument("--verify", action="store_true", help="recompute file digests")
    return p


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "validate-config": _cmd_validate,
             "show-manifest": _cmd_manifest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
