"""Command-line entry point.

Subcommands:
    run <config>        execute a campaign config (JSON), resumable
    timing <algo> <dims>   per-evaluation cost probe, e.g. dims 64,128,256,512
    summarize <dir>     rebuild aggregates from an existing campaign directory
    validate            run the numerical oracle suite

Exit codes: 0 success, 1 failed validation or run error, 2 bad usage/config.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError


def _cmd_run(args) -> int:
    from .harness import run_campaign

    out = run_campaign(args.config)
    print(f"campaign complete: {out}")
    print(f"summary: {out / 'summary.csv'}")
    return 0


def _cmd_timing(args) -> int:
    from .harness import timing_probe

    try:
        dims = [int(part) for part in args.dims.split(",") if part]
    except ValueError:
        print(f"dims must be comma-separated integers, got {args.dims!r}", file=sys.stderr)
        return 2
    table = timing_probe(args.algorithm, dims, samples=args.samples)
    print(table.render())
    return 0


def _cmd_summarize(args) -> int:
    from .harness import summarize_directory

    summaries = summarize_directory(args.directory)
    header = f"{'algorithm':<8} {'function':<20} {'dim':>5} {'succ':>5} {'median_evals':>14} {'premature':>10}"
    print(header)
    for s in summaries:
        med = "-" if s.median_evaluations_to_target is None else f"{s.median_evaluations_to_target:.0f}"
        flag = " [suppressed]" if s.suppressed else ""
        print(
            f"{s.algorithm:<8} {s.function:<20} {s.dimension:>5} "
            f"{s.successes:>3}/{s.trials:<3} {med:>12} {s.premature_fraction:>10.2f}{flag}"
        )
    return 0


def _cmd_validate(args) -> int:
    from .validation import run_oracle_suite

    reports = run_oracle_suite()
    failed = 0
    for report in reports:
        print(report)
        failed += not report.passed
    if failed:
        print(f"{failed} oracle check(s) FAILED")
        return 1
    print(f"all {len(reports)} oracle checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r1nes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a campaign config")
    p.add_argument("config", help="path to a campaign JSON file")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("timing", help="per-evaluation cost probe")
    p.add_argument("algorithm", choices=("r1nes", "snes", "xnes"))
    p.add_argument("dims", help="comma-separated dimensions, e.g. 64,128,256,512")
    p.add_argument("--samples", type=int, default=5, help="measured runs per dimension (default 5)")
    p.set_defaults(func=_cmd_timing)

    p = sub.add_parser("summarize", help="rebuild aggregates for a campaign directory")
    p.add_argument("directory")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("validate", help="run the numerical oracle suite")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, NotADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
