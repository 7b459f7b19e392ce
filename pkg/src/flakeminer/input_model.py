"""Project-list csv handling and package-index sampling.

The csv schema is the tool's primary input interface: one row per subject
project, repeated rows meaning repeated independent executions. Sampling
builds such rows from a package index.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence, TextIO
from urllib.parse import urlsplit

import requests

from .errors import IndexUnavailable, InvalidProjectName, MalformedRow, MissingColumn

log = logging.getLogger(__name__)

INPUT_CSV_COLUMNS = (
    "PROJECT_NAME",
    "PROJECT_URL",
    "PROJECT_HASH",
    "PYPI_TAG",
    "FUNCS_TO_TRACE",
    "TESTS_TO_RUN",
)

# Names become directory-name components, so no separators or whitespace.
PROJECT_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class InputRow:
    """One subject-project execution request.

    row_number is the 1-based position among data rows (header excluded);
    it distinguishes repeated rows of the same project.
    """

    project_name: str
    project_url: str
    project_hash: str | None = None
    pypi_tag: str | None = None
    funcs_to_trace: str | None = None
    tests_to_run: str | None = None
    row_number: int = 1


def parse_input_csv(path: Path | str) -> list[InputRow]:
    """Read a project-list csv, validating header and rows.

    Raises MissingColumn / MalformedRow / InvalidProjectName with the
    offending 1-based file line. Unknown extra columns are tolerated with
    a warning. Blank lines are skipped without consuming row numbers.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file, expected a header row", line=1) from None
        header = [h.strip() for h in header]
        missing = [c for c in INPUT_CSV_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"missing required column(s): {', '.join(missing)}", line=1)
        extra = [c for c in header if c not in INPUT_CSV_COLUMNS]
        if extra:
            log.warning("%s: ignoring unknown column(s): %s", path, ", ".join(extra))
        positions = {c: header.index(c) for c in INPUT_CSV_COLUMNS}

        rows: list[InputRow] = []
        row_number = 0
        for values in reader:
            line = reader.line_num
            if not values or all(v.strip() == "" for v in values):
                continue
            if len(values) < len(header):
                raise MalformedRow(
                    f"expected {len(header)} fields, got {len(values)}", line=line
                )
            row_number += 1
            get = lambda col: values[positions[col]].strip()  # noqa: E731
            name = get("PROJECT_NAME")
            url = get("PROJECT_URL")
            if not name or not url:
                raise MalformedRow("PROJECT_NAME and PROJECT_URL are required", line=line)
            if not PROJECT_NAME_RE.fullmatch(name):
                raise InvalidProjectName(
                    f"project name {name!r} is not filesystem-safe", line=line
                )
            rows.append(
                InputRow(
                    project_name=name,
                    project_url=url,
                    project_hash=get("PROJECT_HASH") or None,
                    pypi_tag=get("PYPI_TAG") or None,
                    funcs_to_trace=get("FUNCS_TO_TRACE") or None,
                    tests_to_run=get("TESTS_TO_RUN") or None,
                    row_number=row_number,
                )
            )
    return rows


def write_input_csv(
    entries: Iterable["InputRow | SampleCandidate"],
    dest: Path | str | TextIO,
    iterations_per_project: int = 1,
) -> None:
    """Write rows (or sampled candidates) as a project-list csv.

    Each entry is repeated iterations_per_project times; re-parsing yields
    sequential row numbers.
    """
    if iterations_per_project < 1:
        raise ValueError("iterations_per_project must be >= 1")

    def emit(fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INPUT_CSV_COLUMNS)
        for entry in entries:
            if isinstance(entry, SampleCandidate):
                record = [
                    entry.package_name,
                    entry.source_url or "",
                    entry.matched_git_tag or "",
                    entry.pypi_tag or "",
                    "",
                    "",
                ]
            else:
                record = [
                    entry.project_name,
                    entry.project_url,
                    entry.project_hash or "",
                    entry.pypi_tag or "",
                    entry.funcs_to_trace or "",
                    entry.tests_to_run or "",
                ]
            for _ in range(iterations_per_project):
                writer.writerow(record)

    if isinstance(dest, (str, Path)):
        with Path(dest).open("w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(dest)


@dataclass(frozen=True)
class SampleCandidate:
    """A package drawn from the index that resolved to a clonable repo."""

    package_name: str
    source_url: str
    pypi_tag: str | None = None
    matched_git_tag: str | None = None


@dataclass
class PackageMetadata:
    """What the index knows about one package."""

    name: str
    versions: list[str] = field(default_factory=list)
    homepage: str | None = None
    repository: str | None = None
    git_tags: list[str] = field(default_factory=list)


class PackageIndex(Protocol):
    """Read-only view of a package index; swappable for offline snapshots."""

    def list_package_names(self) -> list[str]: ...

    def metadata(self, name: str) -> PackageMetadata: ...


class SnapshotIndex:
    """Package index backed by a local JSON snapshot.

    Snapshot format: {"packages": {name: {"versions": [...oldest..newest],
    "homepage": ..., "repository": ..., "git_tags": [...]}}}
    """

    def __init__(self, path: Path | str) -> None:
        try:
            with Path(path).open(encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise IndexUnavailable(f"cannot read index snapshot {path}: {exc}") from exc
        self._packages: dict[str, dict] = data.get("packages", {})

    def list_package_names(self) -> list[str]:
        return list(self._packages)

    def metadata(self, name: str) -> PackageMetadata:
        entry = self._packages[name]
        return PackageMetadata(
            name=name,
            versions=list(entry.get("versions", [])),
            homepage=entry.get("homepage"),
            repository=entry.get("repository"),
            git_tags=list(entry.get("git_tags", [])),
        )


class PyPIIndex:
    """Live client for the public Python package index.

    Exposes no git tags: index metadata does not list repository tags, so
    matched_git_tag stays empty for live sampling.
    """

    SIMPLE_URL = "https://pypi.org/simple/"
    JSON_URL = "https://pypi.org/pypi/{name}/json"

    def __init__(self, timeout: float = 30.0) -> None:
        self._timeout = timeout
        self._session = requests.Session()

    def list_package_names(self) -> list[str]:
        try:
            resp = self._session.get(
                self.SIMPLE_URL,
                timeout=self._timeout,
                headers={"Accept": "application/vnd.pypi.simple.v1+json"},
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise IndexUnavailable(f"package index listing failed: {exc}") from exc
        content_type = resp.headers.get("Content-Type", "")
        if "json" in content_type:
            return [p["name"] for p in resp.json().get("projects", [])]
        return re.findall(r"<a[^>]*>([^<]+)</a>", resp.text)

    def metadata(self, name: str) -> PackageMetadata:
        resp = self._session.get(self.JSON_URL.format(name=name), timeout=self._timeout)
        resp.raise_for_status()
        payload = resp.json()
        info = payload.get("info", {})
        project_urls = info.get("project_urls") or {}
        repository = None
        for key, value in project_urls.items():
            if key.lower() in ("source", "source code", "repository", "code", "github"):
                repository = value
                break
        return PackageMetadata(
            name=name,
            versions=_sorted_versions(payload.get("releases", {})),
            homepage=info.get("home_page"),
            repository=repository,
        )


def _sorted_versions(releases: dict) -> list[str]:
    versions = list(releases)
    try:
        from packaging.version import Version

        versions.sort(key=Version)
    except Exception:
        versions.sort()
    return versions


@dataclass
class SampleStats:
    """Bookkeeping for one sampling pass."""

    considered: int = 0
    no_source_url: int = 0
    metadata_failures: int = 0
    duplicates: int = 0


def sample_projects(
    index: PackageIndex,
    sample_size: int,
    seed: int,
    stats: SampleStats | None = None,
) -> list[SampleCandidate]:
    """Draw a reproducible random sample of repo-backed packages.

    Packages without a recognizable git repository URL are skipped, as are
    duplicates resolving to the same repository; metadata lookup failures
    are skipped and counted. The result can therefore be smaller than
    sample_size.
    """
    if sample_size < 0:
        raise ValueError("sample_size must be >= 0")
    names = sorted(index.list_package_names())
    rng = random.Random(seed)
    rng.shuffle(names)
    chosen = names[: min(sample_size, len(names))]

    candidates: list[SampleCandidate] = []
    seen_urls: set[str] = set()
    for name in chosen:
        if stats is not None:
            stats.considered += 1
        try:
            meta = index.metadata(name)
        except Exception as exc:
            log.warning("metadata lookup failed for %s: %s", name, exc)
            if stats is not None:
                stats.metadata_failures += 1
            continue
        url = _resolve_source_url(meta)
        if url is None:
            if stats is not None:
                stats.no_source_url += 1
            continue
        if url in seen_urls:
            if stats is not None:
                stats.duplicates += 1
            continue
        seen_urls.add(url)
        pypi_tag = meta.versions[-1] if meta.versions else None
        matched = _match_git_tag(pypi_tag, meta.git_tags) if pypi_tag else None
        candidates.append(
            SampleCandidate(
                package_name=meta.name,
                source_url=url,
                pypi_tag=pypi_tag,
                matched_git_tag=matched,
            )
        )
    return candidates


def _resolve_source_url(meta: PackageMetadata) -> str | None:
    """Pick a git-hosting URL from metadata, normalized for deduplication."""
    for raw in (meta.repository, meta.homepage):
        if not raw:
            continue
        normalized = _normalize_github_url(raw)
        if normalized:
            return normalized
    return None


def _normalize_github_url(raw: str) -> str | None:
    try:
        parts = urlsplit(raw.strip())
    except ValueError:
        return None
    host = parts.netloc.lower()
    if host.startswith("www."):
        host = host[4:]
    if host != "github.com":
        return None
    segments = [s for s in parts.path.split("/") if s]
    if len(segments) < 2:
        return None
    owner, repo = segments[0], segments[1]
    if repo.endswith(".git"):
        repo = repo[: -len(".git")]
    if not repo:
        return None
    return f"https://github.com/{owner}/{repo}"


def _match_git_tag(version: str, git_tags: Sequence[str]) -> str | None:
    """A tag matches when it equals the version, optionally 'v'-prefixed."""
    for tag in git_tags:
        if tag == version or (tag.startswith("v") and tag[1:] == version):
            return tag
    return None


def rows_to_csv_text(rows: Iterable[InputRow]) -> str:
    """Render rows as csv text (used to synthesize input.csv copies)."""
    buf = io.StringIO()
    write_input_csv(rows, buf)
    return buf.getvalue()
