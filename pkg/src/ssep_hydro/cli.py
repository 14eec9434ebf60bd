"""Command-line front end: run, validate, and list the named studies."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .studies import STUDIES, load_config, run


def _env_threads():
    raw = os.environ.get("SSEP_HYDRO_THREADS")
    if raw is None:
        return None
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"SSEP_HYDRO_THREADS must be an integer, got {raw!r}")
    return val


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ssep-hydro",
        description="Study harness for the boundary-driven exclusion toolkit.",
    )
    ap.add_argument("--list-studies", action="store_true",
                    help="print the study names and exit")
    sub = ap.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run one study from a JSON config")
    run_p.add_argument("config", help="path to the study config file")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument("--threads", type=int,
                       help="sweep worker threads (default: SSEP_HYDRO_THREADS or 1)")

    sub.add_parser("list-studies", help="print the study names")

    val_p = sub.add_parser("validate", help="parse a config and print its shape")
    val_p.add_argument("config", help="path to the study config file")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)

    if args.list_studies or args.command == "list-studies":
        for name in STUDIES:
            print(name)
        return 0

    if args.command == "run":
        try:
            threads = args.threads if args.threads is not None else _env_threads()
        except ValueError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        return run(args.config, seed=args.seed, out=args.out, threads=threads)

    if args.command == "validate":
        try:
            config = load_config(args.config)
        except ValueError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        print(json.dumps(config.canonical(), indent=2, sort_keys=True))
        print(f"config hash: {config.config_hash}")
        return 0

    ap.print_usage(sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
