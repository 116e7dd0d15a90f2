"""Command line entry point.

Each subcommand reads one flat config file, applies --set overrides, resolves
an output directory, and writes its artifacts (metrics.csv, report.txt,
manifest.cfg, checkpoints) there. `report` merges finished run directories.
Config errors exit with status 2 and leave a machine readable error.json.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, resolve, resolve_out_dir
from .report import MergeError, merge_runs
from .runners import RUNNERS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steerlab",
        description="synthetic-cohort leakage, fusion and latent-partition experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable; wins over the file)",
        )
        p.add_argument("--out", default=None, help="output directory for artifacts")
    rp = sub.add_parser("report", help="merge finished run directories into tables")
    rp.add_argument("runs", nargs="+", help="run directories to merge")
    rp.add_argument("--out", default=None, help="directory for report.csv/report.txt")
    return parser


def _write_error(out_dir: Path | None, record: dict) -> None:
    if out_dir is None:
        return
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(json.dumps(record, indent=2) + "\n")
    except OSError:
        pass


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "report":
        out_dir = Path(args.out) if args.out else Path(".")
        try:
            csv_text, txt_text = merge_runs(args.runs)
        except MergeError as err:
            _write_error(out_dir, err.record())
            print(f"error: {err}", file=sys.stderr)
            return 2
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(csv_text)
        (out_dir / "report.txt").write_text(txt_text)
        print(f"wrote {out_dir / 'report.csv'}")
        print(f"wrote {out_dir / 'report.txt'}")
        return 0

    out_dir: Path | None = None
    try:
        out_dir = resolve_out_dir(args.out, args.command)
        cfg = resolve(args.command, args.config, args.overrides)
        summary = RUNNERS[args.command](cfg, out_dir)
    except ConfigError as err:
        _write_error(out_dir, err.record())
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        record = {"type": type(err).__name__, "message": str(err)}
        _write_error(out_dir, record)
        print(f"error: {err}", file=sys.stderr)
        return 1
    detail = "  ".join(f"{k}={v}" for k, v in summary.items())
    print(f"{args.command} done: {out_dir}  {detail}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
