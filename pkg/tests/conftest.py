"""Shared fixtures: tiny subject projects, a local git repo, a wheelhouse."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from flakeminer.input_model import InputRow
from flakeminer.junit_parser import TestId

TestId.__test__ = False

REPO_ROOT = Path(__file__).resolve().parent.parent
CORPUS_PROJECTS = REPO_ROOT / "fixture_corpus" / "projects"


def make_row(project_url: str, name: str = "proj", row_number: int = 1, **kwargs) -> InputRow:
    return InputRow(
        project_name=name, project_url=project_url, row_number=row_number, **kwargs
    )


def write_project(root: Path, files: dict[str, str]) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        path = root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
    return root


TRIVIAL_PROJECT = {
    "test_trivial.py": "def test_passes():\n    assert True\n",
}


@pytest.fixture
def trivial_project(tmp_path: Path) -> Path:
    return write_project(tmp_path / "trivial", TRIVIAL_PROJECT)


def _git(*args: str, cwd: Path) -> str:
    proc = subprocess.run(
        ["git", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env={
            "PATH": "/usr/bin:/bin:/usr/local/bin",
            "GIT_AUTHOR_NAME": "fixture",
            "GIT_AUTHOR_EMAIL": "fixture@example.invalid",
            "GIT_COMMITTER_NAME": "fixture",
            "GIT_COMMITTER_EMAIL": "fixture@example.invalid",
            "HOME": str(cwd),
        },
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout.strip()


@pytest.fixture(scope="session")
def local_git_repo(tmp_path_factory: pytest.TempPathFactory) -> dict:
    """A two-commit git repository holding a minimal passing test suite."""
    repo = tmp_path_factory.mktemp("gitrepo") / "subject"
    write_project(
        repo,
        {
            "test_history.py": "def test_v1():\n    assert True\n",
            "marker.txt": "first\n",
        },
    )
    _git("init", "--quiet", "--initial-branch=main", cwd=repo)
    _git("add", "-A", cwd=repo)
    _git("commit", "--quiet", "-m", "first", cwd=repo)
    first = _git("rev-parse", "HEAD", cwd=repo)
    (repo / "marker.txt").write_text("second\n", encoding="utf-8")
    _git("add", "-A", cwd=repo)
    _git("commit", "--quiet", "-m", "second", cwd=repo)
    second = _git("rev-parse", "HEAD", cwd=repo)
    return {"path": repo, "url": repo.as_uri(), "first": first, "second": second}


@pytest.fixture(scope="session")
def wheelhouse(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A local wheel directory holding fxdep 1.0, for offline pip installs."""
    src = tmp_path_factory.mktemp("fxdep-src")
    write_project(
        src,
        {
            "pyproject.toml": (
                '[build-system]\nrequires = ["setuptools"]\n'
                'build-backend = "setuptools.build_meta"\n\n'
                "[project]\nname = \"fxdep\"\nversion = \"1.0\"\n"
            ),
            "fxdep.py": "VALUE = 1\n",
            "setup.cfg": "[options]\npy_modules = fxdep\n",
        },
    )
    house = tmp_path_factory.mktemp("wheelhouse")
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "pip",
            "wheel",
            "--no-build-isolation",
            "--no-deps",
            "--no-index",
            "-w",
            str(house),
            str(src),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert list(house.glob("fxdep-1.0-*.whl"))
    return house


@pytest.fixture
def offline_pip(monkeypatch: pytest.MonkeyPatch, wheelhouse: Path):
    """Point pip at the local wheelhouse only."""
    monkeypatch.setenv("PIP_NO_INDEX", "1")
    monkeypatch.setenv("PIP_FIND_LINKS", str(wheelhouse))
    return wheelhouse
