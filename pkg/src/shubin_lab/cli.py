"""Command line: ``shubin-lab run|validate|list-experiments``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, validate_text
from .experiments import DESCRIPTIONS, ExperimentError, run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shubin-lab", description="Spectral, Bernstein and control experiments "
                                 "for anisotropic Shubin operators.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides [experiment] output)")
    r.add_argument("--seed", type=int, help="seed override (unsigned 64-bit)")
    r.add_argument("--threads", type=int, help="worker threads (fallback: SHUBIN_LAB_THREADS)")
    v = sub.add_parser("validate", help="check a config and list every problem")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="show the registered experiment kinds")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK

    if args.command == "list-experiments":
        for kind, text in DESCRIPTIONS.items():
            print(f"{kind:18s} {text}")
        return EXIT_OK

    if args.command == "validate":
        try:
            with open(args.config, encoding="utf-8") as fh:
                issues = validate_text(fh.read())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for issue in issues:
            print(issue)
        if not issues:
            print("ok")
        return EXIT_CONFIG if issues else EXIT_OK

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"config error: {issue}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        cfg.seed = args.seed
    if args.threads is not None and args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg, args.out, args.threads)
    except ExperimentError as exc:
        print(f"numerical error in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(manifest.verdicts, sort_keys=True))
    return EXIT_FAIL if manifest.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
