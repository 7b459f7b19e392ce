"""Aggregation of raw results into the per-test overview table."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from . import results_store
from .classifier import (
    FlakinessVerdict,
    VerdictCounts,
    build_matrices,
    count_verdicts,
    decide_verdict,
)
from .errors import MalformedXml, NameMismatch
from .junit_parser import RunRecord, classify_run_order, parse_junit_xml
from .results_store import ResultsDirectory

log = logging.getLogger(__name__)

OVERVIEW_COLUMNS = (
    "Project_Name",
    "Project_URL",
    "Project_Hash",
    "Test_filename",
    "Test_classname",
    "Test_parametrization",
    "Test_name",
    "flaky?",
    "Passed_sameOrder",
    "Failed_sameOrder",
    "Error_sameOrder",
    "Skipped_sameOrder",
    "Passed_randomOrder",
    "Failed_randomOrder",
    "Error_randomOrder",
    "Skipped_randomOrder",
)


@dataclass(frozen=True)
class OverviewRow:
    project_name: str
    project_url: str
    project_hash: str
    test_filename: str
    test_classname: str
    test_parametrization: str
    test_name: str
    verdict: FlakinessVerdict
    counts: VerdictCounts

    def as_csv_record(self) -> list[str]:
        c = self.counts
        return [
            self.project_name,
            self.project_url,
            self.project_hash,
            self.test_filename,
            self.test_classname,
            self.test_parametrization,
            self.test_name,
            self.verdict.label,
            str(c.passed_same),
            str(c.failed_same),
            str(c.error_same),
            str(c.skipped_same),
            str(c.passed_random),
            str(c.failed_random),
            str(c.error_random),
            str(c.skipped_random),
        ]


def collect_run_records(
    results: ResultsDirectory,
) -> dict[tuple[str, str, str], list[RunRecord]]:
    """Parse every report of every iteration, grouped by project identity.

    Identity is (name, url, hash) from the iteration summary, so the same
    project mined from different revisions stays separate. Unreadable
    iterations, foreign archive members, and malformed reports are skipped
    with warnings; aggregation never aborts on one bad artifact.
    """
    grouped: dict[tuple[str, str, str], list[RunRecord]] = {}
    for iteration in results.iterations:
        try:
            meta = results_store.load_iteration_result(iteration.path)
        except (OSError, ValueError) as exc:
            log.warning("skipping iteration %s: %s", iteration.path, exc)
            continue
        num_runs = int(meta.get("num_runs", 0) or 0)
        if num_runs < 1:
            log.warning("skipping iteration %s: bad num_runs", iteration.path)
            continue
        identity = (
            str(meta.get("project_name") or iteration.project_name),
            str(meta.get("project_url") or ""),
            str(meta.get("project_hash") or ""),
        )
        iteration_key = (identity[0], iteration.row_number)
        try:
            members = list(results_store.iter_archive_members(iteration.path))
        except (OSError, EOFError) as exc:
            log.warning("unreadable archive in %s: %s", iteration.path, exc)
            continue
        records = grouped.setdefault(identity, [])
        for name, data in members:
            try:
                order, run_index = classify_run_order(name, num_runs)
            except NameMismatch:
                continue
            try:
                pairs = parse_junit_xml(data)
            except MalformedXml as exc:
                log.warning("skipping report %s in %s: %s", name, iteration.path, exc)
                continue
            for test, verdict in pairs:
                records.append(
                    RunRecord(
                        test=test,
                        verdict=verdict,
                        iteration_key=iteration_key,
                        order=order,
                        run_index=run_index,
                    )
                )
    return grouped


def build_tests_overview(results_dirs: list[ResultsDirectory]) -> list[OverviewRow]:
    """One classified row per (project identity, test), sorted stably."""
    rows: list[OverviewRow] = []
    merged: dict[tuple[str, str, str], list[RunRecord]] = {}
    for results in results_dirs:
        for identity, records in collect_run_records(results).items():
            merged.setdefault(identity, []).extend(records)
    for identity, records in merged.items():
        name, url, project_hash = identity
        for test, matrix in build_matrices(records).items():
            rows.append(
                OverviewRow(
                    project_name=name,
                    project_url=url,
                    project_hash=project_hash,
                    test_filename=test.file,
                    test_classname=test.classname,
                    test_parametrization=test.parametrization,
                    test_name=test.name,
                    verdict=decide_verdict(matrix),
                    counts=count_verdicts(matrix),
                )
            )
    rows.sort(
        key=lambda r: (
            r.project_name,
            r.test_filename,
            r.test_name,
            r.test_parametrization,
        )
    )
    return rows


def write_overview_csv(
    rows: list[OverviewRow], path: Path | str, include_not_flaky: bool = False
) -> int:
    """Write the overview csv; returns the number of rows written.

    Non-flaky tests are excluded unless include_not_flaky is set.
    """
    written = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OVERVIEW_COLUMNS)
        for row in rows:
            if row.verdict is FlakinessVerdict.NOT_FLAKY and not include_not_flaky:
                continue
            writer.writerow(row.as_csv_record())
            written += 1
    return written
