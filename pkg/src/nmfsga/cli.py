"""Command-line entry point: ``nmfsga {generate,run,report}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, kernels
from .experiment import ConfigError, atomic_write, cmd_generate, cmd_report, cmd_run, load_config


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmfsga", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, type=Path, help="YAML experiment file")
            sp.add_argument("--seed", type=int, help="override the master seed")
            sp.add_argument("--fast", action="store_true", help="desk-scale preset: G=200, C=60, M=2, 1e6 MC samples")
        sp.add_argument("--out", type=Path, help="output directory (default: the config's output_dir)")

    g = sub.add_parser("generate", help="write the grid's datasets with provenance sidecars")
    common(g)
    r = sub.add_parser("run", help="run the experiment grid")
    common(r)
    r.add_argument("--workers", type=int, default=1, help="parallel grid cells")
    rep = sub.add_parser("report", help="tabulate a finished result directory")
    rep.add_argument("result_dir", nargs="?", type=Path)
    common(rep, needs_config=False)
    rep.add_argument("--metric", action="append", help="metric to tabulate (repeatable)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "report":
        target = args.result_dir or args.out
        if target is None:
            print("report: give a result directory", file=sys.stderr)
            return 1
        try:
            text, csv_text, code = cmd_report(target, args.metric)
        except (FileNotFoundError, KeyError) as exc:
            print(f"report: {exc}", file=sys.stderr)
            return 1
        print(text, end="")
        atomic_write(Path(target) / "report.txt", text)
        atomic_write(Path(target) / "report.csv", csv_text)
        return code

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.fast:
            cfg.apply_fast()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    if args.command == "generate":
        try:
            for path in cmd_generate(cfg, args.out):
                print(path)
        except OSError as exc:
            print(f"generate: {exc}", file=sys.stderr)
            return 1
        return 0
    if args.workers < 1:
        print("invalid config: --workers must be at least 1", file=sys.stderr)
        return 1
    return cmd_run(cfg, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
