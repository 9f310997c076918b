"""Command-line interface: ``dtrack run | sweep | replay | selfcheck``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import selfcheck
from .errors import ConfigError, DTrackError, InvalidPlayerId, ParseError
from .harness import ALL_ALGORITHMS, ALL_DISTRIBUTIONS, ExperimentGrid, emit_report, run_grid
from .protocol import AlgorithmConfig, RunReport, run_framework
from .strategies import DEFAULT_BACKUP_THRESHOLD, Algorithm
from .workload import Distribution, SyntheticSource, load_trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

TRACE_HELP = """\
trace format:
  plain text, one decimal player id (0 <= id < k) per line, in arrival
  order. Blank lines and lines starting with '#' are ignored. k defaults
  to the largest id plus one; --k overrides it.

probability file (--mu):
  k nonnegative numbers separated by whitespace or newlines, summing to 1;
  '#' starts a comment.

exit status: 0 success, 1 configuration error, 2 runtime error.
"""


def parse_count(text: str) -> int:
    """Integer accepting ``2^20`` / ``2**20`` shorthand."""
    s = text.strip().replace("**", "^")
    try:
        if "^" in s:
            base, exp = s.split("^", 1)
            return int(base) ** int(exp)
        return int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def parse_backup(text: str) -> float | None:
    if text.strip().lower() in ("off", "none", "no"):
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a ratio: {text!r}") from None


def read_mu(path: str) -> tuple[float, ...]:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            for token in line.split("#", 1)[0].split():
                try:
                    values.append(float(token))
                except ValueError:
                    raise ParseError(path, lineno, f"not a number: {token!r}") from None
    return tuple(values)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.01, help="failure probability (default 0.01)")
    p.add_argument("--backup-threshold", type=parse_backup, default=DEFAULT_BACKUP_THRESHOLD,
                   metavar="R", help="capture ratio below which a proposed algorithm falls back "
                   "to CMY for the rest of the run; 'off' disables (default 0.75)")
    p.add_argument("--estimate-mode", choices=["cumulative", "first-round"], default="cumulative",
                   help="learned variants: re-estimate from all items so far, or only from round 1")
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="output format for --out")
    p.add_argument("--out", metavar="DIR", help="write reports into DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtrack",
        description="Message-level simulator for distributed threshold count tracking.",
        epilog=TRACE_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log each round")
    sub = parser.add_subparsers(dest="command", required=True)
    algos = ", ".join(ALL_ALGORITHMS)
    dists = ", ".join(ALL_DISTRIBUTIONS)

    run = sub.add_parser("run", help="one run of one algorithm", epilog=TRACE_HELP,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("--algo", required=True, metavar="NAME", help=f"one of: {algos}")
    run.add_argument("--n", type=parse_count, metavar="N",
                     help="threshold (accepts 2^20); default: trace length")
    run.add_argument("--k", type=int, metavar="K", help="number of players")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--dist", metavar="NAME", help=f"synthetic workload: {dists}")
    src.add_argument("--trace", metavar="PATH", help="replay player ids from a trace file")
    run.add_argument("--seed", type=int, default=0, help="synthetic workload seed (default 0)")
    run.add_argument("--mu", metavar="FILE", help="explicit probability vector for *-kwndst")
    _add_common(run)

    sweep = sub.add_parser("sweep", help="grid of algorithms x workloads x N x k x seeds",
                           formatter_class=argparse.RawDescriptionHelpFormatter, epilog=TRACE_HELP)
    sweep.add_argument("--algo", action="append", metavar="NAME",
                       help=f"repeatable; default all ({algos})")
    sweep.add_argument("--dist", action="append", metavar="NAME", help=f"repeatable: {dists}")
    sweep.add_argument("--trace", action="append", metavar="PATH", help="repeatable trace files")
    sweep.add_argument("--n", action="append", type=parse_count, metavar="N",
                       help="repeatable; default 2^20")
    sweep.add_argument("--k", action="append", type=int, metavar="K", help="repeatable; default 16")
    sweep.add_argument("--seed", type=int, default=0, help="grid seed (default 0)")
    sweep.add_argument("--seeds", type=int, default=1, metavar="COUNT",
                       help="replicates per workload cell (default 1)")
    sweep.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    _add_common(sweep)

    replay = sub.add_parser("replay", help="run algorithms over a trace",
                            formatter_class=argparse.RawDescriptionHelpFormatter, epilog=TRACE_HELP)
    replay.add_argument("--trace", required=True, metavar="PATH")
    replay.add_argument("--algo", action="append", metavar="NAME", help="repeatable; default all")
    replay.add_argument("--n", type=parse_count, metavar="N", help="default: trace length")
    replay.add_argument("--k", type=int, metavar="K", help="override inferred k")
    replay.add_argument("--mu", metavar="FILE",
                        help="probability vector for *-kwndst (default: trace frequencies)")
    _add_common(replay)

    sub.add_parser("selfcheck", help="check bound formulas against a 50-digit reference")
    return parser


def _print_report(report: RunReport, out=None) -> None:
    out = out or sys.stdout
    label = Algorithm.parse(report.config["algorithm"]).label
    print(f"algorithm={label}", file=out)
    print(f"total_messages={report.total_messages}", file=out)
    print(f"rounds={len(report.rounds)}", file=out)
    print(f"alarm_index={report.alarm_index}", file=out)
    for r in report.rounds:
        print(f"  round {r.round_number:3d} {r.strategy:15s} captured={r.items_captured:<10d} "
              f"remaining={r.remaining_after:<10d} messages={r.total_messages}", file=out)


def _config(args, algo, n, k, mu) -> AlgorithmConfig:
    return AlgorithmConfig(Algorithm.parse(algo), n, k, args.delta,
                           backup_threshold=args.backup_threshold,
                           seed=getattr(args, "seed", None), mu=mu,
                           estimate_mode=args.estimate_mode)


def _emit(args, reports, grid=None) -> None:
    if args.out:
        for path in emit_report(reports, args.format, args.out, grid=grid):
            print(f"wrote {path}")


def cmd_run(args) -> int:
    if args.trace:
        source = load_trace(args.trace, k=args.k)
        n = args.n if args.n is not None else len(source)
    else:
        if args.k is None or args.n is None:
            raise ConfigError("--n and --k are required with --dist")
        Distribution.parse(args.dist)
        source = SyntheticSource(args.dist, args.k, args.seed)
        n = args.n
    mu = read_mu(args.mu) if args.mu else None
    config = _config(args, args.algo, n, source.k, mu)
    report = run_framework(config, source)
    _print_report(report)
    _emit(args, [report])
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = load_trace(args.trace, k=args.k)
    n = args.n if args.n is not None else len(trace)
    mu = read_mu(args.mu) if args.mu else None
    configs = [_config(args, a, n, trace.k, mu) for a in (args.algo or ALL_ALGORITHMS)]
    reports = []
    for config in configs:
        reports.append(run_framework(config, load_trace(args.trace, k=args.k)))
    for r in reports:
        label = Algorithm.parse(r.config["algorithm"]).label
        print(f"{label:16s} total_messages={r.total_messages} rounds={len(r.rounds)}")
    _emit(args, reports)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.out:
        raise ConfigError("sweep needs --out DIR")
    grid = ExperimentGrid(
        algorithms=tuple(args.algo or ALL_ALGORITHMS),
        n_values=tuple(args.n or (2**20,)),
        k_values=tuple(args.k or (16,)),
        distributions=tuple(args.dist or ()) if (args.dist or args.trace) else ALL_DISTRIBUTIONS,
        traces=tuple(args.trace or ()),
        delta=args.delta, replicates=args.seeds, grid_seed=args.seed,
        backup_threshold=args.backup_threshold, estimate_mode=args.estimate_mode,
    )
    result = run_grid(grid, workers=args.workers)
    print(f"{len(result.reports)} runs, {len(result.errors)} failed cells")
    for err in result.errors:
        print(f"  failed: {err.task} -> {err.error}", file=sys.stderr)
    if result.reports:
        _emit(args, result.reports, grid=grid)
    return EXIT_OK if not result.errors else EXIT_RUNTIME


def cmd_selfcheck(args) -> int:
    ok = True
    for name, passed, actual, expected in selfcheck.run():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:28s} got={actual!r} expected={expected!r}")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "replay": cmd_replay, "selfcheck": cmd_selfcheck}


def parse_and_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are config errors here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "delta") and not (0.0 < args.delta < 1.0):
        print(f"dtrack: error: delta must lie in (0, 1), got {args.delta}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, InvalidPlayerId, FileNotFoundError) as exc:
        print(f"dtrack: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DTrackError, OSError) as exc:
        print(f"dtrack: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
