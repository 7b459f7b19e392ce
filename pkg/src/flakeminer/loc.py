"""Source-tree size measurement: per-language line counts and disk usage.

Counting is internal and byte-based: a line is blank when it contains only
whitespace, code otherwise. No comment detection; the numbers describe
project bulk, not style.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

LANGUAGE_EXTENSIONS = {
    ".py": "Python",
    ".pyi": "Python",
    ".c": "C",
    ".h": "C",
    ".cpp": "C++",
    ".cc": "C++",
    ".cxx": "C++",
    ".hpp": "C++",
    ".js": "JavaScript",
    ".mjs": "JavaScript",
    ".sh": "Shell",
    ".bash": "Shell",
    ".yaml": "YAML",
    ".yml": "YAML",
    ".md": "Markdown",
}

LOC_CSV_COLUMNS = ("language", "files", "code", "blank")

_SKIP_DIRS = {".git", "__pycache__", "node_modules", ".tox", ".eggs"}


@dataclass
class LanguageCount:
    files: int = 0
    code: int = 0
    blank: int = 0


@dataclass
class LocReport:
    languages: dict[str, LanguageCount] = field(default_factory=dict)
    skipped_files: int = 0


def measure_loc(sources_dir: Path | str) -> LocReport:
    """Count code and blank lines per language under sources_dir.

    Files with unrecognized extensions are ignored; unreadable files are
    skipped and counted. Deterministic for a fixed tree.
    """
    report = LocReport()
    for path in _iter_source_files(Path(sources_dir)):
        language = LANGUAGE_EXTENSIONS.get(path.suffix.lower())
        if language is None:
            continue
        try:
            data = path.read_bytes()
        except OSError as exc:
            log.warning("skipping unreadable file %s: %s", path, exc)
            report.skipped_files += 1
            continue
        count = report.languages.setdefault(language, LanguageCount())
        count.files += 1
        for line in data.splitlines():
            if line.strip():
                count.code += 1
            else:
                count.blank += 1
    return report


def _iter_source_files(root: Path):
    stack = [root]
    while stack:
        current = stack.pop()
        try:
            entries = sorted(current.iterdir())
        except OSError as exc:
            log.warning("skipping unreadable directory %s: %s", current, exc)
            continue
        for entry in entries:
            if entry.is_symlink():
                continue
            if entry.is_dir():
                if entry.name not in _SKIP_DIRS:
                    stack.append(entry)
            elif entry.is_file():
                yield entry


def loc_csv_rows(report: LocReport) -> list[list[str]]:
    """Stable csv rows: languages alphabetically, then a skipped-files row."""
    rows = [list(LOC_CSV_COLUMNS)]
    for language in sorted(report.languages):
        count = report.languages[language]
        rows.append([language, str(count.files), str(count.code), str(count.blank)])
    rows.append(["(skipped)", str(report.skipped_files), "0", "0"])
    return rows


def write_loc_csv(report: LocReport, path: Path | str) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(loc_csv_rows(report))


def directory_size_bytes(root: Path | str) -> int:
    """Total size of regular files under root, nothing excluded."""
    total = 0
    for dirpath, _dirnames, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            try:
                if not os.path.islink(path):
                    total += os.path.getsize(path)
            except OSError:
                continue
    return total
