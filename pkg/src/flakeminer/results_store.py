"""On-disk layout of mining results.

A campaign produces one stamped results directory containing a run-metadata
area plus one directory per input row; each iteration directory holds the
iteration summary, a line-count csv, and an archive of the raw test
reports. Directory names are the source of truth for discovery, parsed
right-anchored because project names may contain underscores.
"""

from __future__ import annotations

import logging
import re
import shutil
import tarfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterator, Sequence

import yaml

log = logging.getLogger(__name__)

RESULTS_DIR_PREFIX = "flapy-results_"
RUN_META_DIRNAME = "!flapy.run"
RUN_META_FILENAME = "flapy_run.yaml"
INPUT_COPY_FILENAME = "input.csv"
ITERATION_RESULT_FILENAME = "flapy-iteration-result.yaml"
LOC_CSV_FILENAME = "loc.csv"
ARCHIVE_FILENAME = "results.tar.xz"

RESULTS_DIR_RE = re.compile(r"^flapy-results_(?P<date>\d{8})_(?P<time>\d{6})$")
ITERATION_DIR_RE = re.compile(
    r"^(?P<project>.+)_(?P<date>\d{8})_(?P<time>\d{6})_(?P<row>\d+)$"
)

SCHEMA_VERSION = 1


def make_stamp(now: datetime | None = None) -> str:
    return (now or datetime.now()).strftime("%Y%m%d_%H%M%S")


@dataclass(frozen=True)
class IterationDirectory:
    """One discovered iteration directory, identified by its name."""

    path: Path
    project_name: str
    row_number: int


@dataclass
class ResultsDirectory:
    """One campaign results directory."""

    path: Path
    iterations: list[IterationDirectory] = field(default_factory=list)

    @property
    def stamp(self) -> str:
        match = RESULTS_DIR_RE.fullmatch(self.path.name)
        if match is None:
            return make_stamp()
        return f"{match.group('date')}_{match.group('time')}"

    @property
    def meta_dir(self) -> Path:
        return self.path / RUN_META_DIRNAME


def create_results_directory(
    out_dir: Path | str,
    invocation: Sequence[str] = (),
    input_csv: Path | str | None = None,
    input_csv_text: str | None = None,
    now: datetime | None = None,
) -> ResultsDirectory:
    """Create a stamped results directory with its run-metadata area.

    The run metadata records the invocation and start time; the input csv
    is copied byte-identical when a path is given, or synthesized from
    input_csv_text for programmatic callers.
    """
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    moment = now or datetime.now()
    path = out / f"{RESULTS_DIR_PREFIX}{make_stamp(moment)}"
    path.mkdir()
    meta = path / RUN_META_DIRNAME
    meta.mkdir()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "started_at": moment.isoformat(timespec="seconds"),
        "invocation": list(invocation),
    }
    with (meta / RUN_META_FILENAME).open("w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
    if input_csv is not None:
        shutil.copyfile(input_csv, meta / INPUT_COPY_FILENAME)
    elif input_csv_text is not None:
        (meta / INPUT_COPY_FILENAME).write_text(input_csv_text, encoding="utf-8")
    return ResultsDirectory(path=path)


def iteration_dir_name(project_name: str, stamp: str, row_number: int) -> str:
    return f"{project_name}_{stamp}_{row_number}"


def parse_iteration_dir_name(name: str) -> tuple[str, int] | None:
    """Extract (project_name, row_number), right-anchored; None if foreign."""
    match = ITERATION_DIR_RE.fullmatch(name)
    if match is None:
        return None
    return match.group("project"), int(match.group("row"))


def create_iteration_dir(results_path: Path, project_name: str, row_number: int) -> Path:
    match = RESULTS_DIR_RE.fullmatch(results_path.name)
    stamp = (
        f"{match.group('date')}_{match.group('time')}" if match else make_stamp()
    )
    path = results_path / iteration_dir_name(project_name, stamp, row_number)
    path.mkdir(parents=True)
    return path


def write_iteration_result(iteration_dir: Path, doc: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    with (Path(iteration_dir) / ITERATION_RESULT_FILENAME).open(
        "w", encoding="utf-8"
    ) as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_iteration_result(iteration_dir: Path) -> dict:
    with (Path(iteration_dir) / ITERATION_RESULT_FILENAME).open(encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"iteration result in {iteration_dir} is not a mapping")
    return doc


def archive_results(iteration_dir: Path, files: Sequence[Path]) -> Path:
    """Pack files into results.tar.xz under '<iteration-dir-name>/<file>'
    and remove the loose originals."""
    iteration_dir = Path(iteration_dir)
    archive_path = iteration_dir / ARCHIVE_FILENAME
    with tarfile.open(archive_path, "w:xz") as tar:
        for file in files:
            tar.add(file, arcname=f"{iteration_dir.name}/{Path(file).name}")
    for file in files:
        Path(file).unlink()
    return archive_path


def iter_archive_members(iteration_dir: Path) -> Iterator[tuple[str, bytes]]:
    """Yield (member base name, content) for each file in the archive.

    Member paths are validated against traversal; entries escaping the
    archive root are skipped with a warning.
    """
    archive_path = Path(iteration_dir) / ARCHIVE_FILENAME
    with tarfile.open(archive_path, "r:xz") as tar:
        for member in tar.getmembers():
            if not member.isfile():
                continue
            name = member.name
            if name.startswith("/") or ".." in Path(name).parts:
                log.warning("skipping suspicious archive member %s", name)
                continue
            extracted = tar.extractfile(member)
            if extracted is None:
                continue
            yield Path(name).name, extracted.read()


def discover_results(path: Path | str) -> list[ResultsDirectory]:
    """Find results directories at or under path.

    Accepts a results directory itself, a directory containing several, or
    a single iteration directory (wrapped in a synthetic campaign). Items
    not matching the naming schemes are skipped with a warning.
    """
    root = Path(path)
    found: list[ResultsDirectory] = []
    if RESULTS_DIR_RE.fullmatch(root.name) and root.is_dir():
        found.append(_load_results_dir(root))
        return found
    if root.is_dir() and parse_iteration_dir_name(root.name) and (
        root / ITERATION_RESULT_FILENAME
    ).exists():
        project, row = parse_iteration_dir_name(root.name)
        synthetic = ResultsDirectory(path=root.parent)
        synthetic.iterations.append(
            IterationDirectory(path=root, project_name=project, row_number=row)
        )
        return [synthetic]
    if root.is_dir():
        for child in sorted(root.iterdir()):
            if child.is_dir() and RESULTS_DIR_RE.fullmatch(child.name):
                found.append(_load_results_dir(child))
    return found


def _load_results_dir(path: Path) -> ResultsDirectory:
    results = ResultsDirectory(path=path)
    for child in sorted(path.iterdir()):
        if child.name == RUN_META_DIRNAME or not child.is_dir():
            continue
        parsed = parse_iteration_dir_name(child.name)
        if parsed is None:
            log.warning("skipping non-conforming directory %s", child)
            continue
        project, row = parsed
        results.iterations.append(
            IterationDirectory(path=child, project_name=project, row_number=row)
        )
    return results
