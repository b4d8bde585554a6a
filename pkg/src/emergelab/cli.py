"""``lab`` command line: run, emit, validate and the acceptance suite.

Exit codes: 0 success, 1 a numerical criterion failed, 2 a config or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _cmd_run(args) -> int:
    from .runner import run

    cfg = load_config(args.config)
    rec = run(cfg, args.out, None if args.reference or args.threads is None else args.threads)
    out = Path(args.out) if args.out else None
    for c in rec.criteria:
        print(("PASS " if c["passed"] else "FAIL ") + c["name"] + f" value={c['value']:.6g}")
    where = out if out is not None else "the default run directory"
    print(f"run record written to {where}/runrecord.json" if out is not None else f"run record written under {where}")
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    if not rec.passed:
        print("failed criteria: " + ", ".join(rec.failed()), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_emit(args) -> int:
    from .runner import read_series

    text = read_series(args.record, args.series)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid {cfg.kind} config (hash {cfg.hash()[:12]})")
    if args.show:
        print(cfg.to_json())
    return EXIT_OK


def _cmd_suite(args) -> int:
    from .acceptance import run_suite

    results = run_suite(args.out, only=args.only, jobs=args.jobs, stream=sys.stdout)
    failed = [r for r in results if not r.passed]
    if failed:
        print("failed criteria: " + ", ".join(r.label for r in failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute one experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="run directory (default: the config's output, else runs/<kind>-<hash>)")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--threads", type=int, help="numba worker threads; results may differ in reduction order")
    mode.add_argument("--reference", action="store_true", help="single-threaded bit-exact mode (the default)")
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("emit", help="write a tidy CSV series from a finished run")
    e.add_argument("record", help="path to runrecord.json")
    e.add_argument("--series", required=True)
    e.add_argument("-o", "--output", help="destination file (default: stdout)")
    e.set_defaults(func=_cmd_emit)

    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("config")
    v.add_argument("--show", action="store_true", help="print the config with defaults filled in")
    v.set_defaults(func=_cmd_validate)

    s = sub.add_parser("suite", help="run a named suite")
    s.add_argument("name", choices=["acceptance"])
    s.add_argument("--out", default="runs/acceptance")
    s.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    s.add_argument("--jobs", type=int, default=1, help="run independent criteria in parallel processes")
    s.set_defaults(func=_cmd_suite)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
