"""``quantscore`` command-line entry point.

Exit status: 0 success, 1 usage/config error, 2 data/parse error,
3 integrity/verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, QuantScoreError
from .commands import (
    cmd_bench,
    cmd_search,
    cmd_sweep,
    cmd_train,
    cmd_verify_paper,
    require_records,
)
from .config import apply_overrides, load_config
from .records import load_record
from .report import render_csv, render_json, render_table, write_plotdata

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTEGRITY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON (.json) or TOML experiment config")
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,42,123")
    p.add_argument("--bits", help="comma-separated bit-widths, e.g. 32,16,8,4,2")
    p.add_argument("--delta", type=float, help="accuracy tolerance for the viability threshold")
    p.add_argument("--out-dir", help="directory for run records")
    p.add_argument("--format", choices=("csv", "json", "table"), default="table", help="stdout rendering of the result")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quantscore", description="Efficiency indices, simulated PTQ and mixed-precision search.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (
        ("train", "train the full-precision baseline and save its weights"),
        ("sweep", "uniform bit-width PTQ sweep over seeds"),
        ("search", "genetic mixed-precision search"),
        ("bench", "latency of each uniform bit-width"),
    ):
        _experiment_flags(sub.add_parser(name, help=help_text))

    rep = sub.add_parser("report", help="render run records")
    rep.add_argument("records", nargs="*", help="run record JSON files")
    rep.add_argument("--format", choices=("csv", "json", "table", "plotdata"), default="table")
    rep.add_argument("--out-dir", help="write files here instead of stdout (required for plotdata)")

    ver = sub.add_parser("verify-paper", help="recompute the reference tables from their recorded inputs")
    ver.add_argument("--format", choices=("table", "json"), default="table")
    ver.add_argument("--emit-records", metavar="DIR", help="also write one run record per reference condition")
    return parser


def _resolved_config(args):
    cfg = load_config(args.config)
    return apply_overrides(cfg, seeds=args.seeds, bits=args.bits, delta=args.delta, out_dir=args.out_dir)


def _render(record, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(record)
    if fmt == "json":
        return render_json([record])
    return render_table(record)


def _run_experiment(args) -> int:
    cfg = _resolved_config(args)
    if args.command == "bench":
        result = cmd_bench(cfg)
        text = json.dumps(result, indent=2, sort_keys=True) + "\n"
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    record = {"train": cmd_train, "sweep": cmd_sweep, "search": cmd_search}[args.command](cfg)
    path = record.save(Path(cfg.out_dir) / f"{record.run_id}.json")
    if args.command == "train":
        sys.stdout.write(f"test accuracy {record.extra['test_accuracy']:.4f}\nweights {record.artifacts['weights']}\n")
    else:
        sys.stdout.write(_render(record, args.format))
        if args.command == "search":
            e = record.extra
            sys.stdout.write(
                f"best topology {e['best_topology']}  fitness {e['best_fitness']:.4f}  "
                f"best uniform {e['best_uniform_fitness']:.4f}\n"
            )
        else:
            sys.stdout.write(f"pareto knee {record.extra['pareto_knee']} (reference {record.extra['reference_knee']})\n")
    sys.stdout.write(f"record {path}\n")
    return EXIT_OK


def _run_report(args) -> int:
    require_records(args.records)
    records = [load_record(p) for p in args.records]
    if args.format == "plotdata":
        if not args.out_dir:
            raise ConfigError("plotdata output needs --out-dir")
        for record in records:
            for path in write_plotdata(record, args.out_dir):
                sys.stdout.write(f"{path}\n")
        return EXIT_OK
    if args.format == "json":
        chunks = {"all": render_json(records)}
    else:
        chunks = {r.run_id: _render(r, args.format) for r in records}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        suffix = {"csv": "csv", "json": "json", "table": "txt"}[args.format]
        for name, text in chunks.items():
            path = out / f"{'report' if name == 'all' else name}.{suffix}"
            path.write_text(text)
            sys.stdout.write(f"{path}\n")
    else:
        sys.stdout.write("\n".join(chunks.values()))
    return EXIT_OK


def _run_verify(args) -> int:
    report, written = cmd_verify_paper(args.emit_records)
    if args.format == "json":
        sys.stdout.write(json.dumps(report.to_json(), indent=2) + "\n")
    else:
        sys.stdout.write(report.format_diff() + "\n")
    for path in written:
        sys.stderr.write(f"wrote {path}\n")
    return EXIT_OK if report.ok else EXIT_INTEGRITY


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            return _run_report(args)
        if args.command == "verify-paper":
            return _run_verify(args)
        return _run_experiment(args)
    except QuantScoreError as exc:
        sys.stderr.write(f"quantscore: error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"quantscore: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
