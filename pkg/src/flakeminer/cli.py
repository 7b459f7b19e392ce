"""Command-line interface.

Subcommands: run (a whole campaign, locally or as cluster jobs), parse
(aggregate results into the overview csv), sample (draw projects from the
package index), run-iteration (the single-iteration entry point cluster
jobs and containers invoke).

Exit codes: 0 full success, 1 infrastructure failure, 2 usage errors.
The run command reports 0 only when every iteration executed.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import signal
import sys
import threading
from pathlib import Path

from . import __version__, results_store
from .errors import FlakeMinerError, IndexUnavailable, InputCsvError
from .execution import DEFAULT_RUN_TIMEOUT, IterationPlan, run_iteration
from .input_model import (
    PyPIIndex,
    SampleStats,
    SnapshotIndex,
    parse_input_csv,
    sample_projects,
    write_input_csv,
)
from .overview import build_tests_overview, write_overview_csv
from .sandbox import BackendConfig, BackendKind
from .scheduler import (
    CampaignConfig,
    RunMode,
    execute_local,
    generate_cluster_jobs,
    submit_cluster_jobs,
)

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flakeminer",
        description="Mine flaky tests by re-running project suites in fresh environments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="enable debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a mining campaign")
    run.add_argument("input_csv", metavar="INPUT_CSV", type=Path)
    run.add_argument("num_runs", metavar="NUM_RUNS", type=_positive_int)
    run.add_argument("--out-dir", type=Path, default=Path("."))
    run.add_argument(
        "--plus-random-runs",
        action="store_true",
        help="follow the declared-order runs with as many shuffled runs",
    )
    run.add_argument(
        "--run-on", choices=["local", "cluster"], default="local", dest="run_on"
    )
    run.add_argument("--constraint", default=None, help="cluster node constraint")
    run.add_argument(
        "--core-args",
        default="",
        help="extra arguments passed through to each iteration (quoted string)",
    )
    run.add_argument("--max-parallel", type=_positive_int, default=1)
    run.add_argument(
        "--backend", choices=["process", "container"], default="process"
    )
    run.add_argument(
        "--no-submit",
        action="store_true",
        help="with --run-on cluster: generate job scripts but do not submit",
    )
    run.set_defaults(func=cmd_run)

    parse = sub.add_parser("parse", help="aggregate results into the overview csv")
    parse.add_argument("--path", type=Path, required=True, help="results location")
    parse.add_argument("--out", type=Path, default=Path("tests_overview.csv"))
    parse.add_argument(
        "--include-not-flaky",
        action="store_true",
        help="also write rows for tests that never flaked",
    )
    parse.set_defaults(func=cmd_parse)

    sample = sub.add_parser("sample", help="draw random projects from the package index")
    sample.add_argument("--sample-size", type=_non_negative_int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument(
        "--index-snapshot",
        type=Path,
        default=None,
        help="sample from a local index snapshot instead of the live index",
    )
    sample.add_argument(
        "--iterations-per-project",
        type=_positive_int,
        default=1,
        help="repeat each sampled row this many times",
    )
    sample.set_defaults(func=cmd_sample)

    core = sub.add_parser(
        "run-iteration", help="execute a single iteration (cluster/container entry)"
    )
    core.add_argument("--results-dir", type=Path, required=True)
    core.add_argument("--project-name", required=True)
    core.add_argument("--project-url", required=True)
    core.add_argument("--project-hash", default=None)
    core.add_argument("--pypi-tag", default=None)
    core.add_argument("--funcs-to-trace", default=None)
    core.add_argument("--tests-to-run", default=None)
    core.add_argument("--row-number", type=_positive_int, required=True)
    core.add_argument("--num-runs", type=_positive_int, required=True)
    core.add_argument("--plus-random-runs", action="store_true")
    _add_core_options(core)
    core.set_defaults(func=cmd_run_iteration)
    return parser


def _add_core_options(parser: argparse.ArgumentParser) -> None:
    """Options shared by run-iteration and the --core-args pass-through."""
    parser.add_argument(
        "--random-order-seed",
        type=int,
        default=None,
        help="base seed from which every shuffled run's seed is derived",
    )
    parser.add_argument("--run-timeout", type=float, default=DEFAULT_RUN_TIMEOUT)
    parser.add_argument("--collect-coverage", action="store_true")


def parse_core_args(text: str) -> argparse.Namespace:
    """Parse a --core-args pass-through string with the core options parser."""
    parser = argparse.ArgumentParser(prog="core-args", add_help=False)
    _add_core_options(parser)
    return parser.parse_args(shlex.split(text))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _backend_from_args(args: argparse.Namespace) -> BackendConfig:
    if args.backend == "container":
        return BackendConfig.container()
    return BackendConfig.process()


def cmd_run(args: argparse.Namespace) -> int:
    try:
        rows = parse_input_csv(args.input_csv)
    except FileNotFoundError:
        print(f"input csv not found: {args.input_csv}", file=sys.stderr)
        return 2
    except InputCsvError as exc:
        print(f"invalid input csv: {exc}", file=sys.stderr)
        return 2
    try:
        core = parse_core_args(args.core_args)
    except SystemExit:
        return 2
    config = CampaignConfig(
        num_runs=args.num_runs,
        out_dir=args.out_dir,
        mode=RunMode.LOCAL if args.run_on == "local" else RunMode.CLUSTER,
        plus_random_runs=args.plus_random_runs,
        base_seed=core.random_order_seed,
        collect_coverage=core.collect_coverage,
        run_timeout=core.run_timeout,
        max_parallel=args.max_parallel,
        constraint=args.constraint,
    )
    if config.mode is RunMode.CLUSTER:
        return _run_cluster(rows, config, args)
    return _run_local(rows, config, args)


def _run_local(rows, config: CampaignConfig, args: argparse.Namespace) -> int:
    backend = _backend_from_args(args)
    cancel = threading.Event()

    def _interrupt(_sig, _frame):
        if cancel.is_set():
            raise KeyboardInterrupt
        log.warning("interrupt received: finishing in-flight runs, skipping the rest")
        cancel.set()

    previous = signal.signal(signal.SIGINT, _interrupt)
    try:
        summary = execute_local(
            rows,
            config,
            backend,
            input_csv=args.input_csv,
            invocation=sys.argv,
            cancel=cancel,
        )
    finally:
        signal.signal(signal.SIGINT, previous)
    for outcome in summary.outcomes:
        print(
            f"{outcome.row.project_name} row {outcome.row.row_number}: {outcome.status}"
        )
    print(f"results: {summary.results_path}")
    if cancel.is_set():
        return 130
    return 0 if summary.all_succeeded else 1


def _run_cluster(rows, config: CampaignConfig, args: argparse.Namespace) -> int:
    results = results_store.create_results_directory(
        config.out_dir, invocation=sys.argv, input_csv=args.input_csv
    )
    scripts = generate_cluster_jobs(rows, config, results.path)
    print(f"generated {len(scripts)} job script(s) under {scripts[0].parent}")
    if args.no_submit:
        return 0
    outcomes = submit_cluster_jobs(scripts, config.submit_command)
    failures = [path for path, code in outcomes if code != 0]
    if failures:
        print(f"{len(failures)} submission(s) failed", file=sys.stderr)
        return 1
    print(f"submitted {len(outcomes)} job(s)")
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    if not args.path.exists():
        print(f"no such path: {args.path}", file=sys.stderr)
        return 2
    results_dirs = results_store.discover_results(args.path)
    if not results_dirs:
        log.warning("no results found under %s", args.path)
    rows = build_tests_overview(results_dirs)
    try:
        written = write_overview_csv(rows, args.out, args.include_not_flaky)
    except OSError as exc:
        print(f"cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {written} row(s) to {args.out}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    try:
        if args.index_snapshot is not None:
            index = SnapshotIndex(args.index_snapshot)
        else:
            index = PyPIIndex()
        stats = SampleStats()
        candidates = sample_projects(index, args.sample_size, args.seed, stats)
    except IndexUnavailable as exc:
        print(f"package index unavailable: {exc}", file=sys.stderr)
        return 1
    write_input_csv(candidates, sys.stdout, args.iterations_per_project)
    log.info(
        "considered %d package(s): %d without a repo URL, %d duplicates, %d lookup failures",
        stats.considered,
        stats.no_source_url,
        stats.duplicates,
        stats.metadata_failures,
    )
    return 0


def cmd_run_iteration(args: argparse.Namespace) -> int:
    from .input_model import InputRow

    if not args.results_dir.is_dir():
        print(f"results directory does not exist: {args.results_dir}", file=sys.stderr)
        return 2
    row = InputRow(
        project_name=args.project_name,
        project_url=args.project_url,
        project_hash=args.project_hash,
        pypi_tag=args.pypi_tag,
        funcs_to_trace=args.funcs_to_trace,
        tests_to_run=args.tests_to_run,
        row_number=args.row_number,
    )
    plan = IterationPlan(
        row=row,
        num_runs=args.num_runs,
        plus_random_runs=args.plus_random_runs,
        base_seed=args.random_order_seed,
        collect_coverage=args.collect_coverage,
        run_timeout=args.run_timeout,
    )
    try:
        result = run_iteration(plan, BackendConfig.process(), args.results_dir)
    except FlakeMinerError as exc:
        print(f"iteration failed: {exc}", file=sys.stderr)
        return 1
    print(f"iteration {result.iteration_dir.name}: {result.status}")
    return 0 if result.status == "ok" else 1


def _normalize_argv(argv: list[str]) -> list[str]:
    """Fold '--core-args VALUE' into '--core-args=VALUE'.

    The value usually starts with a dash, which argparse would otherwise
    refuse to treat as this option's argument.
    """
    normalized: list[str] = []
    index = 0
    while index < len(argv):
        token = argv[index]
        if token == "--core-args" and index + 1 < len(argv):
            normalized.append(f"--core-args={argv[index + 1]}")
            index += 2
            continue
        normalized.append(token)
        index += 1
    return normalized


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_normalize_argv(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
