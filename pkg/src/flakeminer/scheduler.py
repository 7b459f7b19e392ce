"""Campaign scheduling: a local worker pool or generated cluster jobs.

Cluster mode writes one batch script per input row into the results
directory's run-metadata area. Script generation is a pure function of
(rows, config, results directory) so it can be golden-tested; submission
is a separate thin step invoking the cluster's submit command per script.
"""

from __future__ import annotations

import enum
import logging
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import results_store
from .execution import (
    DEFAULT_RUN_TIMEOUT,
    IterationPlan,
    build_core_argv,
    run_iteration,
)
from .input_model import InputRow, rows_to_csv_text
from .sandbox import BackendConfig

log = logging.getLogger(__name__)

JOBS_DIRNAME = "jobs"


class RunMode(enum.Enum):
    LOCAL = "local"
    CLUSTER = "cluster"


@dataclass
class CampaignConfig:
    """Everything a campaign needs beyond its input rows."""

    num_runs: int
    out_dir: Path = Path(".")
    mode: RunMode = RunMode.LOCAL
    plus_random_runs: bool = False
    base_seed: int | None = None
    collect_coverage: bool = False
    run_timeout: float = DEFAULT_RUN_TIMEOUT
    max_parallel: int = 1
    constraint: str | None = None
    core_command: Sequence[str] = ("flakeminer",)
    submit_command: Sequence[str] = ("sbatch",)
    extra_env: dict[str, str] = field(default_factory=dict)


@dataclass
class IterationOutcome:
    row: InputRow
    status: str
    iteration_dir: Path | None = None
    error: str = ""


@dataclass
class CampaignSummary:
    results_path: Path
    outcomes: list[IterationOutcome] = field(default_factory=list)

    @property
    def succeeded(self) -> int:
        return sum(1 for o in self.outcomes if o.status == "ok")

    @property
    def all_succeeded(self) -> bool:
        return bool(self.outcomes) and all(o.status == "ok" for o in self.outcomes)


def _plan_for(row: InputRow, config: CampaignConfig) -> IterationPlan:
    return IterationPlan(
        row=row,
        num_runs=config.num_runs,
        plus_random_runs=config.plus_random_runs,
        base_seed=config.base_seed,
        collect_coverage=config.collect_coverage,
        run_timeout=config.run_timeout,
        extra_env=dict(config.extra_env),
    )


def execute_local(
    rows: Sequence[InputRow],
    config: CampaignConfig,
    backend: BackendConfig,
    input_csv: Path | str | None = None,
    invocation: Sequence[str] = (),
    cancel: threading.Event | None = None,
) -> CampaignSummary:
    """Run every row on this machine with a bounded worker pool.

    Iteration failures never abort the campaign; each row ends up with an
    outcome. A set cancel event lets in-flight runs finish and records the
    rest as cancelled.
    """
    results = results_store.create_results_directory(
        config.out_dir,
        invocation=invocation,
        input_csv=input_csv,
        input_csv_text=None if input_csv else rows_to_csv_text(rows),
    )
    summary = CampaignSummary(results_path=results.path)
    workers = max(1, config.max_parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(
                run_iteration, _plan_for(row, config), backend, results.path, cancel
            ): row
            for row in rows
        }
        for future in as_completed(futures):
            row = futures[future]
            try:
                result = future.result()
            except Exception as exc:  # noqa: BLE001 - campaign must survive any row
                log.exception(
                    "iteration %s/%s failed", row.project_name, row.row_number
                )
                summary.outcomes.append(
                    IterationOutcome(row=row, status="failed", error=str(exc))
                )
                continue
            summary.outcomes.append(
                IterationOutcome(
                    row=row, status=result.status, iteration_dir=result.iteration_dir
                )
            )
    summary.outcomes.sort(key=lambda o: o.row.row_number)
    return summary


def build_job_script(
    row: InputRow, config: CampaignConfig, results_path: Path | str
) -> str:
    """Render one POSIX batch script executing one iteration.

    The directive block carries the iteration directory name as job name
    (plus the node constraint when configured); directives are comments,
    so the script also runs under a plain shell.
    """
    match = results_store.RESULTS_DIR_RE.fullmatch(Path(results_path).name)
    stamp = (
        f"{match.group('date')}_{match.group('time')}"
        if match
        else results_store.make_stamp()
    )
    job_name = results_store.iteration_dir_name(
        row.project_name, stamp, row.row_number
    )
    core = build_core_argv(
        row,
        results_dir=str(results_path),
        num_runs=config.num_runs,
        plus_random_runs=config.plus_random_runs,
        base_seed=config.base_seed,
        run_timeout=config.run_timeout,
        collect_coverage=config.collect_coverage,
        program=config.core_command,
    )
    lines = [
        "#!/bin/sh",
        f"#SBATCH --job-name={job_name}",
    ]
    if config.constraint:
        lines.append(f"#SBATCH --constraint={config.constraint}")
    lines += [
        "",
        "set -e",
        " ".join(shlex.quote(part) for part in core),
        "",
    ]
    return "\n".join(lines)


def generate_cluster_jobs(
    rows: Sequence[InputRow], config: CampaignConfig, results_path: Path | str
) -> list[Path]:
    """Write one job script per row into <results>/!flapy.run/jobs/."""
    jobs_dir = Path(results_path) / results_store.RUN_META_DIRNAME / JOBS_DIRNAME
    jobs_dir.mkdir(parents=True, exist_ok=True)
    scripts: list[Path] = []
    for row in rows:
        script_path = jobs_dir / f"iteration_{row.row_number:03d}.sh"
        script_path.write_text(
            build_job_script(row, config, results_path), encoding="utf-8"
        )
        script_path.chmod(0o755)
        scripts.append(script_path)
    return scripts


def submit_cluster_jobs(
    scripts: Sequence[Path], submit_command: Sequence[str] = ("sbatch",)
) -> list[tuple[Path, int]]:
    """Submit each script, one submit-command invocation per script."""
    outcomes: list[tuple[Path, int]] = []
    for script in scripts:
        argv = [*submit_command, str(script)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
            code = proc.returncode
            if code != 0:
                log.error("submission failed for %s: %s", script, proc.stderr.strip())
        except OSError as exc:
            log.error("cannot invoke %s: %s", submit_command[0], exc)
            code = -1
        outcomes.append((script, code))
    return outcomes
