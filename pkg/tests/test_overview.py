"""Aggregating stored results into the per-test overview."""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import pytest

from flakeminer import results_store
from flakeminer.classifier import FlakinessVerdict
from flakeminer.overview import (
    OVERVIEW_COLUMNS,
    build_tests_overview,
    collect_run_records,
    write_overview_csv,
)
from flakeminer.results_store import discover_results

VERDICT_MARKUP = {
    "P": "",
    "F": '<failure message="boom">trace</failure>',
    "E": '<error message="boom">trace</error>',
    "S": '<skipped message="later"/>',
}


def junit_xml(letters: str, file: str = "test_mod.py", classname: str = "test_mod") -> str:
    cases = "".join(
        f'<testcase file="{file}" classname="{classname}" '
        f'name="test_t{i}" time="0.01">{VERDICT_MARKUP[letter]}</testcase>'
        for i, letter in enumerate(letters)
    )
    return (
        '<?xml version="1.0" encoding="utf-8"?>'
        f'<testsuite name="pytest" tests="{len(letters)}">{cases}</testsuite>'
    )


def build_store(
    root: Path,
    runs_by_row: dict[int, list[str]],
    num_runs: int,
    project: str = "alpha",
    url: str = "https://example.com/alpha.git",
    project_hash: str = "h1",
    stamp_minute: int = 0,
):
    """Synthesize a results directory from per-run verdict letter strings.

    Report index within each row's list is the global run index, so
    positions past num_runs are shuffled-order runs.
    """
    now = datetime(2023, 7, 1, 10, stamp_minute, 0, tzinfo=timezone.utc)
    results = results_store.create_results_directory(root, invocation=["t"], now=now)
    for row_number, run_letters in runs_by_row.items():
        iteration = results_store.create_iteration_dir(
            results.path, project, row_number
        )
        reports = []
        for index, letters in enumerate(run_letters):
            path = iteration / f"{project}_output{index}.xml"
            path.write_text(junit_xml(letters), encoding="utf-8")
            reports.append(path)
        results_store.archive_results(iteration, reports)
        results_store.write_iteration_result(
            iteration,
            {
                "project_name": project,
                "project_url": url,
                "project_hash": project_hash,
                "row_number": row_number,
                "status": "ok",
                "num_runs": num_runs,
            },
        )
    return discover_results(results.path)[0]


class TestCollect:
    def test_records_grouped_by_identity_with_orders(self, tmp_path):
        store = build_store(tmp_path, {1: ["PF", "FP", "PP", "SP"]}, num_runs=2)
        grouped = collect_run_records(store)
        identity = ("alpha", "https://example.com/alpha.git", "h1")
        assert set(grouped) == {identity}
        records = grouped[identity]
        assert len(records) == 8
        orders = {(r.run_index, r.order.value) for r in records}
        assert orders == {(0, "same"), (1, "same"), (2, "random"), (3, "random")}
        assert {r.iteration_key for r in records} == {("alpha", 1)}

    def test_bad_summary_yaml_skips_iteration(self, tmp_path, caplog):
        store = build_store(tmp_path, {1: ["P"], 2: ["P"]}, num_runs=1)
        broken = store.iterations[0].path / results_store.ITERATION_RESULT_FILENAME
        broken.write_text("- just\n- a list\n", encoding="utf-8")
        grouped = collect_run_records(store)
        assert len(list(grouped.values())[0]) == 1
        assert "skipping iteration" in caplog.text

    def test_missing_num_runs_skips_iteration(self, tmp_path, caplog):
        store = build_store(tmp_path, {1: ["P"]}, num_runs=1)
        summary_path = store.iterations[0].path / results_store.ITERATION_RESULT_FILENAME
        doc = results_store.load_iteration_result(store.iterations[0].path)
        del doc["num_runs"]
        import yaml

        summary_path.write_text(yaml.safe_dump(doc), encoding="utf-8")
        assert collect_run_records(store) == {}
        assert "bad num_runs" in caplog.text

    def test_malformed_report_skipped_others_kept(self, tmp_path, caplog):
        store = build_store(tmp_path, {1: ["P", "P"]}, num_runs=2)
        iteration = store.iterations[0].path
        archive = iteration / results_store.ARCHIVE_FILENAME
        # Rebuild the archive with one good and one rotten report.
        good = dict(results_store.iter_archive_members(iteration))
        archive.unlink()
        (iteration / "alpha_output0.xml").write_bytes(good["alpha_output0.xml"])
        (iteration / "alpha_output1.xml").write_text("<unclosed", encoding="utf-8")
        results_store.archive_results(
            iteration,
            [iteration / "alpha_output0.xml", iteration / "alpha_output1.xml"],
        )
        grouped = collect_run_records(store)
        records = list(grouped.values())[0]
        assert [r.run_index for r in records] == [0]
        assert "skipping report" in caplog.text

    def test_foreign_member_names_ignored(self, tmp_path):
        store = build_store(tmp_path, {1: ["P"]}, num_runs=1)
        iteration = store.iterations[0].path
        good = dict(results_store.iter_archive_members(iteration))
        (iteration / results_store.ARCHIVE_FILENAME).unlink()
        (iteration / "alpha_output0.xml").write_bytes(good["alpha_output0.xml"])
        (iteration / "coverage.xml").write_text(junit_xml("P"), encoding="utf-8")
        results_store.archive_results(
            iteration, [iteration / "alpha_output0.xml", iteration / "coverage.xml"]
        )
        records = list(collect_run_records(store).values())[0]
        assert len(records) == 1


class TestBuildOverview:
    def test_classifies_and_counts_per_test(self, tmp_path):
        # t0 stable pass; t1 flaky in declared order.
        store = build_store(
            tmp_path, {1: ["PP", "PF"], 2: ["PP", "PP"]}, num_runs=2
        )
        rows = build_tests_overview([store])
        assert [r.test_name for r in rows] == ["test_t0", "test_t1"]
        stable, flaky = rows
        assert stable.verdict is FlakinessVerdict.NOT_FLAKY
        assert flaky.verdict is FlakinessVerdict.NON_ORDER_DEPENDENT
        assert (flaky.counts.passed_same, flaky.counts.failed_same) == (3, 1)
        assert flaky.counts.passed_random == 0

    def test_error_and_skip_counts_by_order(self, tmp_path):
        store = build_store(tmp_path, {1: ["E", "S", "P", "F"]}, num_runs=2)
        (row,) = build_tests_overview([store])
        c = row.counts
        assert (c.error_same, c.skipped_same) == (1, 1)
        assert (c.passed_random, c.failed_random) == (1, 1)
        assert (c.passed_same, c.failed_same, c.error_random, c.skipped_random) == (
            0,
            0,
            0,
            0,
        )
        assert row.verdict is FlakinessVerdict.ORDER_DEPENDENT

    def test_counts_sum_to_appearances(self, tmp_path):
        store = build_store(
            tmp_path, {1: ["PFS", "EPP", "SSP", "FEP"]}, num_runs=2
        )
        rows = build_tests_overview([store])
        assert len(rows) == 3
        for row in rows:
            assert row.counts.total == 4

    def test_same_identity_merges_across_results_dirs(self, tmp_path):
        first = build_store(tmp_path / "a", {1: ["P"]}, num_runs=1)
        second = build_store(tmp_path / "b", {2: ["F"]}, num_runs=1, stamp_minute=1)
        (row,) = build_tests_overview([first, second])
        assert (row.counts.passed_same, row.counts.failed_same) == (1, 1)
        # Pooled evidence only: neither cell flips on its own.
        assert row.verdict is FlakinessVerdict.INFRASTRUCTURE

    def test_different_hash_stays_separate(self, tmp_path):
        first = build_store(tmp_path / "a", {1: ["P"]}, num_runs=1, project_hash="h1")
        second = build_store(
            tmp_path / "b", {1: ["F"]}, num_runs=1, project_hash="h2", stamp_minute=1
        )
        rows = build_tests_overview([first, second])
        assert [r.project_hash for r in rows] == ["h1", "h2"]
        assert all(r.verdict is FlakinessVerdict.NOT_FLAKY for r in rows)

    def test_rows_sorted_by_project_file_name(self, tmp_path):
        noisy = build_store(tmp_path / "a", {1: ["P"]}, num_runs=1, project="zeta")
        quiet = build_store(
            tmp_path / "b", {1: ["P"]}, num_runs=1, project="alpha", stamp_minute=1
        )
        rows = build_tests_overview([noisy, quiet])
        assert [r.project_name for r in rows] == ["alpha", "zeta"]


class TestWriteCsv:
    def overview_rows(self, tmp_path):
        store = build_store(
            tmp_path, {1: ["PP", "PF"], 2: ["PP", "PP"]}, num_runs=2
        )
        return build_tests_overview([store])

    def test_not_flaky_excluded_by_default(self, tmp_path):
        rows = self.overview_rows(tmp_path)
        out = tmp_path / "overview.csv"
        written = write_overview_csv(rows, out)
        assert written == 1
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(OVERVIEW_COLUMNS)
        assert lines[1].split(",") == [
            "alpha",
            "https://example.com/alpha.git",
            "h1",
            "test_mod.py",
            "test_mod",
            "",
            "test_t1",
            "non-order-dependent",
            "3",
            "1",
            "0",
            "0",
            "0",
            "0",
            "0",
            "0",
        ]

    def test_include_not_flaky_flag(self, tmp_path):
        rows = self.overview_rows(tmp_path)
        out = tmp_path / "overview.csv"
        written = write_overview_csv(rows, out, include_not_flaky=True)
        assert written == 2
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert lines[1].split(",")[6:8] == ["test_t0", "not flaky"]

    def test_empty_rows_still_write_header(self, tmp_path):
        out = tmp_path / "overview.csv"
        assert write_overview_csv([], out) == 0
        assert out.read_text(encoding="utf-8") == ",".join(OVERVIEW_COLUMNS) + "\n"
