"""Iteration execution: the core loop that re-runs one project's tests.

One iteration = one input row: acquire sources once, measure them, then
for every run build a throwaway workspace (private source copy + fresh
virtual environment), install dependencies, and run the test framework
with a junit report. Declared-order runs come first, shuffled runs after,
sharing one global run index sequence.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import results_store
from .errors import EnvCreationFailed, InstallFailed, SourceAcquisitionError
from .input_model import InputRow
from .install import install_dependencies
from .junit_parser import Order
from .loc import directory_size_bytes, measure_loc, write_loc_csv
from .sandbox import (
    BackendConfig,
    BackendKind,
    CONTAINER_RESULTS_DIR,
    acquire_sources,
    build_container_invocation,
    fresh_run_workspace,
)

log = logging.getLogger(__name__)

ENV_RUN_INDEX = "FLAKEMINER_RUN_INDEX"
ENV_RUN_ORDER = "FLAKEMINER_RUN_ORDER"
ENV_ITERATION = "FLAKEMINER_ITERATION"

SHUFFLE_PLUGIN_MODULE = "_flakeminer_shuffle"

FNV64_OFFSET_BASIS = 14695981039346656037
FNV64_PRIME = 1099511628211

DEFAULT_RUN_TIMEOUT = 3600.0


def derive_run_seed(base_seed: int, iteration_index: int, run_index: int) -> int:
    """64-bit FNV-1a over the decimal key 'base:iteration:run'.

    Deterministic, and any component change reshuffles the whole value, so
    repeated rows of one project get unrelated seed sequences.
    """
    value = FNV64_OFFSET_BASIS
    for byte in f"{base_seed}:{iteration_index}:{run_index}".encode("ascii"):
        value ^= byte
        value = (value * FNV64_PRIME) % (1 << 64)
    return value


@dataclass(frozen=True)
class IterationPlan:
    """Everything needed to execute one input row."""

    row: InputRow
    num_runs: int
    plus_random_runs: bool = False
    base_seed: int | None = None
    collect_coverage: bool = False
    run_timeout: float = DEFAULT_RUN_TIMEOUT
    extra_env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")


@dataclass(frozen=True)
class RunSpec:
    """One planned run: position in the global sequence plus its order."""

    order: Order
    global_index: int
    seed: int | None


@dataclass
class RunOutcome:
    global_index: int
    order: Order
    seed: int | None
    status: str
    report_name: str | None = None
    exit_code: int | None = None
    duration: float = 0.0
    note: str = ""


@dataclass
class IterationResult:
    row: InputRow
    iteration_dir: Path
    status: str
    resolved_revision: str | None = None
    outcomes: list[RunOutcome] = field(default_factory=list)


def plan_runs(plan: IterationPlan) -> list[RunSpec]:
    """Lay out the run sequence: declared order first, shuffled after.

    Shuffled runs get a seed derived from (base_seed, row, global index);
    without a base seed the global index itself seeds the shuffle.
    """
    specs = [
        RunSpec(order=Order.SAME, global_index=i, seed=None)
        for i in range(plan.num_runs)
    ]
    if plan.plus_random_runs:
        for i in range(plan.num_runs, 2 * plan.num_runs):
            if plan.base_seed is None:
                seed = i
            else:
                seed = derive_run_seed(plan.base_seed, plan.row.row_number, i)
            specs.append(RunSpec(order=Order.RANDOM, global_index=i, seed=seed))
    return specs


def run_iteration(
    plan: IterationPlan,
    backend: BackendConfig,
    results_path: Path | str,
    cancel: threading.Event | None = None,
) -> IterationResult:
    """Execute one iteration into an iteration directory under results_path.

    Always leaves a complete iteration directory behind (summary yaml,
    loc.csv, report archive), whatever happens to individual runs.
    """
    # Report paths are handed to subprocesses running from other working
    # directories (and to container mounts); relative paths would silently
    # scatter reports into the run workspaces.
    results_path = Path(results_path).resolve()
    if backend.kind is BackendKind.CONTAINER:
        return _run_iteration_container(plan, backend, results_path)
    return _run_iteration_process(plan, backend, results_path, cancel)


def _run_iteration_process(
    plan: IterationPlan,
    backend: BackendConfig,
    results_path: Path,
    cancel: threading.Event | None,
) -> IterationResult:
    row = plan.row
    started = datetime.now(timezone.utc)
    iteration_dir = results_store.create_iteration_dir(
        results_path, row.project_name, row.row_number
    )
    outcomes: list[RunOutcome] = []
    status = "ok"
    resolved = None
    loc_report = None
    disk_usage = None

    with tempfile.TemporaryDirectory(prefix="fm-src-") as tmp:
        try:
            acquired = acquire_sources(
                row.project_url, row.project_hash, Path(tmp) / "sources"
            )
        except SourceAcquisitionError as exc:
            log.error("iteration %s/%s: %s", row.project_name, row.row_number, exc)
            status = exc.status
            _finalize_iteration(
                iteration_dir, plan, status, None, None, None, outcomes, started
            )
            return IterationResult(
                row=row, iteration_dir=iteration_dir, status=status, outcomes=outcomes
            )

        resolved = acquired.resolved_revision
        loc_report = measure_loc(acquired.path)
        disk_usage = directory_size_bytes(acquired.path)

        for spec in plan_runs(plan):
            if cancel is not None and cancel.is_set():
                outcomes.append(
                    RunOutcome(
                        global_index=spec.global_index,
                        order=spec.order,
                        seed=spec.seed,
                        status="cancelled",
                    )
                )
                status = "cancelled"
                continue
            outcomes.append(
                _run_once(plan, spec, acquired.path, iteration_dir, backend)
            )

    # An iteration that yielded nothing to analyze is a failure even when
    # every run "completed": timeouts, crashes, and install failures all
    # leave report_name unset.
    if status == "ok" and outcomes and all(o.report_name is None for o in outcomes):
        status = "no-reports"

    _finalize_iteration(
        iteration_dir, plan, status, resolved, loc_report, disk_usage, outcomes, started
    )
    return IterationResult(
        row=row,
        iteration_dir=iteration_dir,
        status=status,
        resolved_revision=resolved,
        outcomes=outcomes,
    )


def _run_once(
    plan: IterationPlan,
    spec: RunSpec,
    pristine_sources: Path,
    iteration_dir: Path,
    backend: BackendConfig,
) -> RunOutcome:
    row = plan.row
    outcome = RunOutcome(
        global_index=spec.global_index, order=spec.order, seed=spec.seed, status="ok"
    )
    report_path = iteration_dir / f"{row.project_name}_output{spec.global_index}.xml"
    begin = time.monotonic()
    try:
        workspace = fresh_run_workspace(
            pristine_sources, system_site_packages=backend.system_site_packages
        )
    except EnvCreationFailed as exc:
        outcome.status = "env-failed"
        outcome.note = str(exc)
        outcome.duration = time.monotonic() - begin
        return outcome
    try:
        try:
            install_dependencies(row, workspace)
        except InstallFailed as exc:
            outcome.status = "install-failed"
            outcome.note = _tail(exc.log or str(exc))
            return outcome
        _write_shuffle_plugin(workspace.root)
        argv = _pytest_argv(plan, spec, workspace, report_path, iteration_dir)
        env = _run_env(plan, spec, workspace)
        try:
            proc = subprocess.run(
                argv,
                cwd=workspace.sources_dir,
                env=env,
                capture_output=True,
                text=True,
                timeout=plan.run_timeout,
            )
        except subprocess.TimeoutExpired:
            outcome.status = "timeout"
            outcome.note = f"no result within {plan.run_timeout}s"
            if report_path.exists():
                report_path.unlink()
            return outcome
        outcome.exit_code = proc.returncode
        if report_path.exists():
            outcome.report_name = report_path.name
        else:
            outcome.status = "crashed"
            outcome.note = _tail(proc.stderr or proc.stdout)
    finally:
        outcome.duration = time.monotonic() - begin
        workspace.release()
    return outcome


def _pytest_argv(
    plan: IterationPlan,
    spec: RunSpec,
    workspace,
    report_path: Path,
    iteration_dir: Path,
) -> list[str]:
    argv = [str(workspace.python), "-m", "pytest"]
    if plan.row.tests_to_run:
        argv += shlex.split(plan.row.tests_to_run)
    argv += [
        "--junit-xml",
        str(report_path),
        "-o",
        "junit_family=xunit1",
        "-p",
        "no:cacheprovider",
    ]
    if spec.order is Order.RANDOM:
        argv += ["-p", SHUFFLE_PLUGIN_MODULE, f"--random-order-seed={spec.seed}"]
    if plan.collect_coverage and _has_module(workspace, "pytest_cov"):
        coverage_path = (
            iteration_dir / f"{plan.row.project_name}_coverage{spec.global_index}.xml"
        )
        argv += ["--cov", "--cov-report", f"xml:{coverage_path}"]
    return argv


def _has_module(workspace, module: str) -> bool:
    probe = subprocess.run(
        [str(workspace.python), "-c", f"import {module}"], capture_output=True
    )
    return probe.returncode == 0


def _run_env(plan: IterationPlan, spec: RunSpec, workspace) -> dict[str, str]:
    env = os.environ.copy()
    existing = env.get("PYTHONPATH")
    env["PYTHONPATH"] = (
        f"{workspace.root}{os.pathsep}{existing}" if existing else str(workspace.root)
    )
    env[ENV_RUN_INDEX] = str(spec.global_index)
    env[ENV_RUN_ORDER] = spec.order.value
    env[ENV_ITERATION] = str(plan.row.row_number)
    env.update(plan.extra_env)
    return env


def _write_shuffle_plugin(workspace_root: Path) -> None:
    source = Path(__file__).with_name("_shuffle_plugin.py").read_text(encoding="utf-8")
    (workspace_root / f"{SHUFFLE_PLUGIN_MODULE}.py").write_text(source, encoding="utf-8")


def _tail(text: str, limit: int = 2000) -> str:
    text = text.strip()
    return text[-limit:] if len(text) > limit else text


def _finalize_iteration(
    iteration_dir: Path,
    plan: IterationPlan,
    status: str,
    resolved: str | None,
    loc_report,
    disk_usage: int | None,
    outcomes: list[RunOutcome],
    started: datetime,
) -> None:
    from .loc import LocReport

    write_loc_csv(loc_report or LocReport(), iteration_dir / results_store.LOC_CSV_FILENAME)
    report_files = sorted(
        p
        for p in iteration_dir.iterdir()
        if p.is_file() and p.suffix == ".xml"
    )
    results_store.archive_results(iteration_dir, report_files)
    row = plan.row
    doc = {
        "project_name": row.project_name,
        "project_url": row.project_url,
        "project_hash": row.project_hash,
        "pypi_tag": row.pypi_tag,
        "funcs_to_trace": row.funcs_to_trace,
        "tests_to_run": row.tests_to_run,
        "row_number": row.row_number,
        "status": status,
        "resolved_revision": resolved,
        "started_at": started.isoformat(timespec="seconds"),
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "num_runs": plan.num_runs,
        "plus_random_runs": plan.plus_random_runs,
        "base_seed": plan.base_seed,
        "random_seeds": [s.seed for s in plan_runs(plan) if s.order is Order.RANDOM],
        "disk_usage_bytes": disk_usage,
        "runs": [
            {
                "index": o.global_index,
                "order": o.order.value,
                "seed": o.seed,
                "status": o.status,
                "report": o.report_name,
                "exit_code": o.exit_code,
                "duration_s": round(o.duration, 3),
                "note": o.note,
            }
            for o in outcomes
        ],
    }
    results_store.write_iteration_result(iteration_dir, doc)


def build_core_argv(
    row: InputRow,
    results_dir: str,
    num_runs: int,
    plus_random_runs: bool = False,
    base_seed: int | None = None,
    run_timeout: float | None = None,
    collect_coverage: bool = False,
    program: Sequence[str] = ("flakeminer",),
) -> list[str]:
    """Command line for the single-iteration entry point.

    Shared by cluster job scripts and container invocations so every layer
    launches iterations identically.
    """
    argv = [
        *program,
        "run-iteration",
        "--results-dir",
        results_dir,
        "--project-name",
        row.project_name,
        "--project-url",
        row.project_url,
        "--row-number",
        str(row.row_number),
        "--num-runs",
        str(num_runs),
    ]
    if row.project_hash:
        argv += ["--project-hash", row.project_hash]
    if row.pypi_tag:
        argv += ["--pypi-tag", row.pypi_tag]
    if row.funcs_to_trace:
        argv += ["--funcs-to-trace", row.funcs_to_trace]
    if row.tests_to_run:
        argv += ["--tests-to-run", row.tests_to_run]
    if plus_random_runs:
        argv.append("--plus-random-runs")
    if base_seed is not None:
        argv += ["--random-order-seed", str(base_seed)]
    if run_timeout is not None and run_timeout != DEFAULT_RUN_TIMEOUT:
        argv += ["--run-timeout", str(run_timeout)]
    if collect_coverage:
        argv.append("--collect-coverage")
    return argv


def _run_iteration_container(
    plan: IterationPlan, backend: BackendConfig, results_path: Path
) -> IterationResult:
    """Run one iteration by delegating to the entry point in a container.

    The container mounts the results directory; the iteration directory
    and its files are produced inside. The summary yaml is read back for
    the return value; a container that exits without producing one is
    reported as container-failed.
    """
    row = plan.row
    sources_mount = None
    if not row.project_url.startswith(("http://", "https://", "git://", "ssh://")):
        candidate = Path(row.project_url)
        if candidate.is_dir():
            sources_mount = candidate.resolve()
    core = build_core_argv(
        row,
        results_dir=CONTAINER_RESULTS_DIR,
        num_runs=plan.num_runs,
        plus_random_runs=plan.plus_random_runs,
        base_seed=plan.base_seed,
        run_timeout=plan.run_timeout,
        collect_coverage=plan.collect_coverage,
    )
    argv = build_container_invocation(
        backend, core, results_dir=results_path, sources_path=sources_mount
    )
    total_runs = plan.num_runs * (2 if plan.plus_random_runs else 1)
    budget = plan.run_timeout * (total_runs + 1) + 1800
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=budget)
        exit_note = f"container exited {proc.returncode}"
    except subprocess.TimeoutExpired:
        exit_note = f"container did not finish within {budget}s"

    match = results_store.RESULTS_DIR_RE.fullmatch(results_path.name)
    stamp = (
        f"{match.group('date')}_{match.group('time')}"
        if match
        else results_store.make_stamp()
    )
    iteration_dir = results_path / results_store.iteration_dir_name(
        row.project_name, stamp, row.row_number
    )
    if (iteration_dir / results_store.ITERATION_RESULT_FILENAME).exists():
        doc = results_store.load_iteration_result(iteration_dir)
        return IterationResult(
            row=row,
            iteration_dir=iteration_dir,
            status=str(doc.get("status", "ok")),
            resolved_revision=doc.get("resolved_revision"),
        )
    log.error(
        "container for %s/%s left no iteration result (%s)",
        row.project_name,
        row.row_number,
        exit_note,
    )
    return IterationResult(
        row=row, iteration_dir=iteration_dir, status="container-failed"
    )
