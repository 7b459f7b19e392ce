"""Project-list csv contract and package-index sampling."""

from __future__ import annotations

import io
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flakeminer.errors import (
    IndexUnavailable,
    InvalidProjectName,
    MalformedRow,
    MissingColumn,
)
from flakeminer.input_model import (
    INPUT_CSV_COLUMNS,
    InputRow,
    SampleStats,
    SnapshotIndex,
    _match_git_tag,
    _normalize_github_url,
    parse_input_csv,
    sample_projects,
    write_input_csv,
)

DATA_DIR = Path(__file__).parent / "data"

HEADER = ",".join(INPUT_CSV_COLUMNS)


def write_csv(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "input.csv"
    path.write_text(text, encoding="utf-8")
    return path


class TestParse:
    def test_full_row(self, tmp_path):
        path = write_csv(
            tmp_path,
            HEADER
            + "\navwx-engine,https://github.com/avwx-rest/avwx-engine,ed1d3e,1.6.4,avwx.fetch,tests/\n",
        )
        (row,) = parse_input_csv(path)
        assert row == InputRow(
            project_name="avwx-engine",
            project_url="https://github.com/avwx-rest/avwx-engine",
            project_hash="ed1d3e",
            pypi_tag="1.6.4",
            funcs_to_trace="avwx.fetch",
            tests_to_run="tests/",
            row_number=1,
        )

    def test_empty_optionals_become_none(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\np,./p,,,,\n")
        (row,) = parse_input_csv(path)
        assert row.project_hash is None
        assert row.pypi_tag is None
        assert row.funcs_to_trace is None
        assert row.tests_to_run is None

    def test_row_numbers_are_data_positions(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\na,./a,,,,\nb,./b,,,,\na,./a,,,,\n")
        rows = parse_input_csv(path)
        assert [r.row_number for r in rows] == [1, 2, 3]
        assert [r.project_name for r in rows] == ["a", "b", "a"]

    def test_blank_lines_skipped_without_consuming_numbers(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\na,./a,,,,\n\n,,,,,\nb,./b,,,,\n")
        rows = parse_input_csv(path)
        assert [(r.project_name, r.row_number) for r in rows] == [("a", 1), ("b", 2)]

    def test_values_are_stripped(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\n  a , ./a ,, , ,\n")
        (row,) = parse_input_csv(path)
        assert row.project_name == "a"
        assert row.project_url == "./a"
        assert row.pypi_tag is None

    def test_missing_column_reports_line_one(self, tmp_path):
        path = write_csv(tmp_path, "PROJECT_NAME,PROJECT_URL\na,./a\n")
        with pytest.raises(MissingColumn) as exc:
            parse_input_csv(path)
        assert exc.value.line == 1
        assert "PROJECT_HASH" in str(exc.value)

    def test_empty_file(self, tmp_path):
        with pytest.raises(MissingColumn):
            parse_input_csv(write_csv(tmp_path, ""))

    def test_unknown_column_tolerated_with_warning(self, tmp_path, caplog):
        path = write_csv(tmp_path, HEADER + ",NOTES\na,./a,,,,,remark\n")
        with caplog.at_level("WARNING"):
            (row,) = parse_input_csv(path)
        assert row.project_name == "a"
        assert "NOTES" in caplog.text

    def test_short_row_reports_its_line(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\na,./a,,,,\nb,./b\n")
        with pytest.raises(MalformedRow) as exc:
            parse_input_csv(path)
        assert exc.value.line == 3

    def test_missing_required_fields(self, tmp_path):
        with pytest.raises(MalformedRow):
            parse_input_csv(write_csv(tmp_path, HEADER + "\n,./a,,,,\n"))
        with pytest.raises(MalformedRow):
            parse_input_csv(write_csv(tmp_path, HEADER + "\na,,,,,\n"))

    def test_unsafe_project_name_rejected(self, tmp_path):
        path = write_csv(tmp_path, HEADER + "\na/b,./a,,,,\n")
        with pytest.raises(InvalidProjectName) as exc:
            parse_input_csv(path)
        assert exc.value.line == 2

    def test_quoted_fields_with_commas(self, tmp_path):
        path = write_csv(
            tmp_path, HEADER + '\np,./p,,,,"test_a.py test_b.py"\n'
        )
        (row,) = parse_input_csv(path)
        assert row.tests_to_run == "test_a.py test_b.py"


class TestWrite:
    def test_iterations_per_project_repeats_rows(self, tmp_path):
        entries = [InputRow("a", "./a"), InputRow("b", "./b")]
        path = tmp_path / "out.csv"
        write_input_csv(entries, path, iterations_per_project=4)
        rows = parse_input_csv(path)
        assert [r.project_name for r in rows] == ["a"] * 4 + ["b"] * 4
        assert [r.row_number for r in rows] == list(range(1, 9))

    def test_rejects_zero_iterations(self, tmp_path):
        with pytest.raises(ValueError):
            write_input_csv([], tmp_path / "out.csv", iterations_per_project=0)

    def test_writes_to_file_object(self):
        buf = io.StringIO()
        write_input_csv([InputRow("a", "./a", pypi_tag="1.0")], buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == HEADER
        assert lines[1] == "a,./a,,1.0,,"


_name_st = st.from_regex(r"[A-Za-z0-9._-]{1,16}", fullmatch=True)
_field_st = st.text(
    alphabet="abcXYZ0189/:._-@+% ", min_size=1, max_size=24
).map(str.strip).filter(bool)


@settings(max_examples=60)
@given(
    rows=st.lists(
        st.builds(
            lambda name, url, opts: InputRow(
                project_name=name,
                project_url=url,
                project_hash=opts[0],
                pypi_tag=opts[1],
                funcs_to_trace=opts[2],
                tests_to_run=opts[3],
            ),
            _name_st,
            _field_st,
            st.tuples(*(st.none() | _field_st for _ in range(4))),
        ),
        max_size=8,
    )
)
def test_write_parse_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "input.csv"
    write_input_csv(rows, path)
    parsed = parse_input_csv(path)
    expected = [
        InputRow(
            project_name=r.project_name,
            project_url=r.project_url,
            project_hash=r.project_hash,
            pypi_tag=r.pypi_tag,
            funcs_to_trace=r.funcs_to_trace,
            tests_to_run=r.tests_to_run,
            row_number=i + 1,
        )
        for i, r in enumerate(rows)
    ]
    assert parsed == expected


class TestSampling:
    def test_snapshot_sample_yields_only_repo_backed_packages(self):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        stats = SampleStats()
        candidates = sample_projects(index, sample_size=10, seed=7, stats=stats)
        assert {c.package_name for c in candidates} == {
            "aqualog",
            "breadbox",
            "cloudpin",
        }
        assert stats.considered == 10
        assert stats.no_source_url == 7
        assert stats.duplicates == 0

    def test_url_normalization_and_tag_matching(self):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        by_name = {
            c.package_name: c for c in sample_projects(index, sample_size=10, seed=7)
        }
        aqualog = by_name["aqualog"]
        assert aqualog.source_url == "https://github.com/aqua-dev/aqualog"
        assert aqualog.pypi_tag == "2.1.0"
        assert aqualog.matched_git_tag == "v2.1.0"
        breadbox = by_name["breadbox"]
        assert breadbox.source_url == "https://github.com/crumb/breadbox"
        assert breadbox.matched_git_tag == "3.2"
        cloudpin = by_name["cloudpin"]
        assert cloudpin.source_url == "https://github.com/skyteam/cloudpin"
        assert cloudpin.pypi_tag == "0.5"
        assert cloudpin.matched_git_tag is None

    def test_sampling_is_reproducible_and_follows_seeded_shuffle(self):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        names = sorted(index.list_package_names())
        rng = random.Random(3)
        rng.shuffle(names)
        expected_pool = names[:4]
        candidates = sample_projects(index, sample_size=4, seed=3)
        assert [c.package_name for c in candidates] == [
            n for n in expected_pool if n in ("aqualog", "breadbox", "cloudpin")
        ]
        assert candidates == sample_projects(index, sample_size=4, seed=3)

    def test_duplicate_repo_urls_collapse(self, tmp_path):
        snapshot = {
            "packages": {
                "one": {"versions": ["1.0"], "repository": "https://github.com/o/r"},
                "two": {"versions": ["2.0"], "repository": "https://github.com/o/r.git"},
            }
        }
        path = tmp_path / "snap.json"
        path.write_text(json.dumps(snapshot), encoding="utf-8")
        stats = SampleStats()
        candidates = sample_projects(SnapshotIndex(path), 2, seed=0, stats=stats)
        assert len(candidates) == 1
        assert stats.duplicates == 1

    def test_metadata_failures_are_skipped_and_counted(self):
        class FlakyIndex:
            def list_package_names(self):
                return ["good", "bad"]

            def metadata(self, name):
                if name == "bad":
                    raise RuntimeError("boom")
                from flakeminer.input_model import PackageMetadata

                return PackageMetadata(
                    name=name,
                    versions=["1.0"],
                    repository="https://github.com/g/g",
                )

        stats = SampleStats()
        candidates = sample_projects(FlakyIndex(), 2, seed=0, stats=stats)
        assert [c.package_name for c in candidates] == ["good"]
        assert stats.metadata_failures == 1

    def test_sample_size_zero(self):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        assert sample_projects(index, 0, seed=1) == []

    def test_negative_sample_size_rejected(self):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        with pytest.raises(ValueError):
            sample_projects(index, -1, seed=1)

    def test_missing_snapshot_raises_index_unavailable(self, tmp_path):
        with pytest.raises(IndexUnavailable):
            SnapshotIndex(tmp_path / "absent.json")

    def test_candidates_serialize_into_input_csv(self, tmp_path):
        index = SnapshotIndex(DATA_DIR / "index_snapshot.json")
        candidates = sample_projects(index, 10, seed=7)
        path = tmp_path / "sampled.csv"
        write_input_csv(candidates, path, iterations_per_project=2)
        rows = parse_input_csv(path)
        assert len(rows) == 6
        by_name = {r.project_name: r for r in rows}
        assert by_name["aqualog"].project_hash == "v2.1.0"
        assert by_name["aqualog"].pypi_tag == "2.1.0"
        assert by_name["cloudpin"].project_hash is None


@pytest.mark.parametrize(
    ("raw", "expected"),
    [
        ("https://github.com/a/b", "https://github.com/a/b"),
        ("https://www.github.com/a/b/tree/main/sub", "https://github.com/a/b"),
        ("http://GITHUB.com/a/b.git", "https://github.com/a/b"),
        ("https://gitlab.com/a/b", None),
        ("https://github.com/only-owner", None),
        ("not a url", None),
    ],
)
def test_normalize_github_url(raw, expected):
    assert _normalize_github_url(raw) == expected


@pytest.mark.parametrize(
    ("version", "tags", "expected"),
    [
        ("1.2", ["v1.1", "v1.2"], "v1.2"),
        ("1.2", ["1.2"], "1.2"),
        ("1.2", ["v1.20", "1.21"], None),
        ("1.2", [], None),
    ],
)
def test_match_git_tag(version, tags, expected):
    assert _match_git_tag(version, tags) == expected
