"""Dependency installation into a run's virtual environment.

Strategy when no index tag is pinned: requirements files first, then the
project's own packaging metadata, then Pipfile [packages]. All applicable
strategies run, in that order. A pinned index tag replaces the search with
a single `pip install name==tag`. Afterwards the test framework is
installed if the environment lacks it.
"""

from __future__ import annotations

import logging
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import InstallFailed
from .input_model import InputRow
from .sandbox import Workspace

log = logging.getLogger(__name__)

INSTALL_TIMEOUT = 900.0

_SKIP_DIRS = {".git", "__pycache__", "node_modules", ".tox", ".eggs", "venv", ".venv"}


@dataclass
class InstallStep:
    strategy: str
    argv: list[str]
    exit_code: int
    output: str


@dataclass
class InstallLog:
    steps: list[InstallStep] = field(default_factory=list)
    note: str = ""

    def render(self) -> str:
        lines = []
        for step in self.steps:
            lines.append(f"[{step.strategy}] exit={step.exit_code}: {' '.join(step.argv)}")
            if step.output.strip():
                lines.append(step.output.strip())
        if self.note:
            lines.append(self.note)
        return "\n".join(lines)


def find_requirements_files(sources_dir: Path) -> list[Path]:
    """requirements*.txt anywhere in the tree, depth-first, sorted by path."""
    found: list[Path] = []
    stack = [Path(sources_dir)]
    while stack:
        current = stack.pop()
        try:
            entries = sorted(current.iterdir())
        except OSError:
            continue
        for entry in entries:
            if entry.is_dir() and not entry.is_symlink():
                if entry.name not in _SKIP_DIRS:
                    stack.append(entry)
            elif entry.is_file() and re.fullmatch(r"requirements.*\.txt", entry.name):
                found.append(entry)
    return sorted(found)


def parse_pipfile_packages(pipfile: Path) -> list[str]:
    """Extract `name = "spec"` entries from the [packages] section.

    Minimal parser: enough for the common Pipfile shape, nothing more.
    '*' and empty specs mean unpinned.
    """
    specs: list[str] = []
    section = None
    for raw in pipfile.read_text(encoding="utf-8", errors="replace").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if section != "packages" or "=" not in line:
            continue
        name, _, value = line.partition("=")
        name = name.strip().strip('"').strip("'")
        value = value.strip().strip('"').strip("'")
        if not name or value.startswith("{"):
            continue
        if value in ("*", ""):
            specs.append(name)
        elif value[0] in "<>=!~":
            specs.append(f"{name}{value}")
        else:
            specs.append(f"{name}=={value}")
    return specs


def install_dependencies(row: InputRow, workspace: Workspace) -> InstallLog:
    """Install the subject's dependencies into the workspace venv.

    Raises InstallFailed (carrying the log) on the first failing step.
    """
    result = InstallLog()
    if row.pypi_tag:
        _run_pip(
            workspace,
            ["install", f"{row.project_name}=={row.pypi_tag}"],
            "pypi-tag",
            result,
        )
    else:
        src = workspace.sources_dir
        for req in find_requirements_files(src):
            _run_pip(workspace, ["install", "-r", str(req)], "requirements", result)
        if (src / "pyproject.toml").exists() or (src / "setup.py").exists() or (
            src / "setup.cfg"
        ).exists():
            _run_pip(
                workspace,
                ["install", "--no-build-isolation", str(src)],
                "project-metadata",
                result,
            )
        pipfile = src / "Pipfile"
        if pipfile.exists():
            specs = parse_pipfile_packages(pipfile)
            if specs:
                _run_pip(workspace, ["install", *specs], "pipfile", result)
        if not result.steps:
            result.note = "no dependency declarations found"
    ensure_test_tooling(workspace, result)
    return result


def ensure_test_tooling(workspace: Workspace, result: InstallLog | None = None) -> None:
    """Make sure the venv can run pytest, installing it only when missing."""
    probe = subprocess.run(
        [str(workspace.python), "-c", "import pytest"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    if probe.returncode == 0:
        return
    log_ = result if result is not None else InstallLog()
    _run_pip(workspace, ["install", "pytest"], "test-framework", log_)


def _run_pip(
    workspace: Workspace, pip_args: Sequence[str], strategy: str, result: InstallLog
) -> None:
    argv = [
        str(workspace.python),
        "-m",
        "pip",
        *pip_args,
        "--no-input",
        "--disable-pip-version-check",
    ]
    try:
        proc = subprocess.run(
            argv,
            capture_output=True,
            text=True,
            timeout=INSTALL_TIMEOUT,
            cwd=workspace.sources_dir,
        )
    except subprocess.TimeoutExpired as exc:
        result.steps.append(InstallStep(strategy, list(argv), -1, str(exc)))
        raise InstallFailed(
            f"{strategy} installation timed out", log=result.render()
        ) from exc
    result.steps.append(
        InstallStep(strategy, list(argv), proc.returncode, proc.stdout + proc.stderr)
    )
    if proc.returncode != 0:
        raise InstallFailed(
            f"{strategy} installation exited {proc.returncode}", log=result.render()
        )
