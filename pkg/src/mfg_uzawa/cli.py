"""Command line interface.

    mfg-uzawa run --config <path> [...] [--out <dir>] [--jobs N]
    mfg-uzawa presets

Exit codes: 0 all runs converged, 2 some run hit its iteration cap, 1 error.
The MFG_UZAWA_LOG environment variable (off|info|debug) controls solver
logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .experiments import list_presets, parse_config, run_experiment

log = logging.getLogger("mfg_uzawa")


def _setup_logging():
    level_word = os.environ.get("MFG_UZAWA_LOG", "off").strip().lower()
    levels = {"off": logging.CRITICAL + 10, "info": logging.INFO, "debug": logging.DEBUG}
    if level_word not in levels:
        print(f"warning: unknown MFG_UZAWA_LOG value {level_word!r}", file=sys.stderr)
        level_word = "off"
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(levels[level_word])


def _run_one(path: Path, out_root, multi: bool):
    config = parse_config(path.read_text())
    if out_root is None:
        out_dir = config.output_dir or f"runs/{path.stem}"
    else:
        out_dir = Path(out_root) / path.stem if multi else out_root
    report = run_experiment(config, out_dir=out_dir)
    status = "converged" if report.converged else "cap reached"
    print(
        f"{path.stem}: {status} after {report.iterations} iterations "
        f"({report.wall_time:.2f}s) -> {out_dir}"
    )
    return report.converged


def _cmd_run(args) -> int:
    paths = [Path(p) for p in args.config]
    for p in paths:
        if not p.is_file():
            print(f"error: config file not found: {p}", file=sys.stderr)
            return 1
    multi = len(paths) > 1
    try:
        if args.jobs > 1 and multi:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(lambda p: _run_one(p, args.out, multi), paths))
        else:
            results = [_run_one(p, args.out, multi) for p in paths]
    except Exception as exc:  # solver or IO failure
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if all(results) else 2


def _cmd_presets(_args) -> int:
    for name, path in list_presets():
        print(f"{name}\t{path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfg-uzawa",
        description="Uzawa iterations for stationary mean field games on the periodic grid.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one or more experiment configs")
    p_run.add_argument("--config", nargs="+", required=True, help="config file path(s)")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="concurrent runs for multiple configs")
    p_run.set_defaults(fn=_cmd_run)
    p_presets = sub.add_parser("presets", help="list shipped experiment presets")
    p_presets.set_defaults(fn=_cmd_presets)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
