"""Isolated execution environments: source acquisition, per-run workspaces,
and container invocation building.

Container invocations mount only the results directory (at /results) and,
for local-path projects, the source path read-only at its own path, so the
in-container entry point sees the same project URL the host saw.
"""

from __future__ import annotations

import enum
import logging
import os
import shlex
import shutil
import subprocess
import tempfile
import venv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .errors import CloneFailed, CopyFailed, EnvCreationFailed, RevisionNotFound, TemplateError

log = logging.getLogger(__name__)

ENV_SETUP_SCRIPT = "FLAPY_DOCKER_COMMAND_SETUP_SCRIPT"
ENV_IMAGE = "FLAPY_DOCKER_IMAGE"

DEFAULT_IMAGE = "flakeminer:latest"
CONTAINER_RESULTS_DIR = "/results"

_GIT_URL_PREFIXES = ("http://", "https://", "git://", "ssh://", "file://")


class BackendKind(enum.Enum):
    PROCESS = "process"
    CONTAINER = "container"


@dataclass(frozen=True)
class BackendConfig:
    """How runs are isolated.

    container_command may contain {image} and {results_dir} placeholders;
    unknown placeholders or ones expanding to nothing raise TemplateError
    at invocation-build time.
    """

    kind: BackendKind = BackendKind.PROCESS
    container_command: str = "docker"
    image_ref: str = DEFAULT_IMAGE
    setup_script: str | None = None
    system_site_packages: bool = True

    @classmethod
    def process(cls, system_site_packages: bool = True) -> "BackendConfig":
        return cls(kind=BackendKind.PROCESS, system_site_packages=system_site_packages)

    @classmethod
    def container(cls, image_ref: str = DEFAULT_IMAGE, **kwargs) -> "BackendConfig":
        return cls(kind=BackendKind.CONTAINER, image_ref=image_ref, **kwargs)


@dataclass(frozen=True)
class AcquiredSources:
    """A materialized project source tree."""

    path: Path
    resolved_revision: str | None = None


def acquire_sources(
    project_url: str, project_hash: str | None, dest_dir: Path | str
) -> AcquiredSources:
    """Clone (git URL) or copy (local path) project sources into dest_dir.

    For clones, project_hash is checked out when given and the resolved
    HEAD commit is reported. Local copies are taken as-is (no checkout;
    no revision reported) except for interpreter and test-runner cache
    residue, which is dropped.
    """
    dest = Path(dest_dir)
    if _looks_like_git_url(project_url):
        return _clone(project_url, project_hash, dest)
    source_path = Path(project_url)
    if not source_path.is_dir():
        raise CopyFailed(f"project path does not exist: {project_url}")
    try:
        # Stale bytecode caches survive the copy (mtime and size match) and
        # make pytest report the origin's file paths instead of the copy's.
        shutil.copytree(
            source_path,
            dest,
            symlinks=True,
            ignore=shutil.ignore_patterns("__pycache__", "*.pyc", ".pytest_cache"),
        )
    except OSError as exc:
        raise CopyFailed(f"copying {project_url} failed: {exc}") from exc
    return AcquiredSources(path=dest, resolved_revision=None)


def _looks_like_git_url(url: str) -> bool:
    return url.startswith(_GIT_URL_PREFIXES) or (
        "@" in url and ":" in url.split("@", 1)[1]
    )


def _clone(url: str, revision: str | None, dest: Path) -> AcquiredSources:
    argv = ["git", "clone", "--quiet"]
    if revision is None:
        argv += ["--depth", "1"]
    argv += [url, str(dest)]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CloneFailed(f"git clone failed for {url}: {proc.stderr.strip()}")
    if revision is not None:
        checkout = subprocess.run(
            ["git", "-C", str(dest), "checkout", "--quiet", revision],
            capture_output=True,
            text=True,
        )
        if checkout.returncode != 0:
            raise RevisionNotFound(
                f"revision {revision!r} not found in {url}: {checkout.stderr.strip()}"
            )
    head = subprocess.run(
        ["git", "-C", str(dest), "rev-parse", "HEAD"], capture_output=True, text=True
    )
    resolved = head.stdout.strip() if head.returncode == 0 else None
    return AcquiredSources(path=dest, resolved_revision=resolved)


@dataclass
class Workspace:
    """One run's throwaway working area: private source copy plus venv."""

    root: Path
    sources_dir: Path
    venv_dir: Path
    created_at: datetime

    @property
    def python(self) -> Path:
        return self.venv_dir / "bin" / "python"

    def release(self) -> None:
        shutil.rmtree(self.root, ignore_errors=True)


def fresh_run_workspace(
    sources_dir: Path | str,
    base_dir: Path | str | None = None,
    system_site_packages: bool = True,
) -> Workspace:
    """Build a brand-new workspace: copy of the sources and a fresh venv.

    With system_site_packages (the default) the venv sees the host
    interpreter's packages, so the test framework needs no download; the
    isolated mode installs pip for real installations.
    """
    root = Path(tempfile.mkdtemp(prefix="fm-run-", dir=base_dir))
    try:
        work_sources = root / "sources"
        shutil.copytree(sources_dir, work_sources, symlinks=True)
        venv_dir = root / "venv"
        try:
            venv.create(
                venv_dir,
                system_site_packages=system_site_packages,
                with_pip=not system_site_packages,
                symlinks=True,
            )
        except (OSError, subprocess.CalledProcessError) as exc:
            raise EnvCreationFailed(f"virtualenv creation failed: {exc}") from exc
        ws = Workspace(
            root=root,
            sources_dir=work_sources,
            venv_dir=venv_dir,
            created_at=datetime.now(timezone.utc),
        )
        if not ws.python.exists():
            raise EnvCreationFailed(f"virtualenv has no interpreter at {ws.python}")
        return ws
    except Exception:
        shutil.rmtree(root, ignore_errors=True)
        raise


def build_container_invocation(
    config: BackendConfig,
    core_args: Sequence[str],
    results_dir: Path | str,
    sources_path: Path | str | None = None,
    env: dict[str, str] | None = None,
) -> list[str]:
    """Build the argv that runs one iteration inside a container.

    core_args is the in-container entry-point command (already using
    CONTAINER_RESULTS_DIR for its results path). Pure string construction;
    nothing is executed. env defaults to os.environ for the FLAPY_*
    overrides.
    """
    if config.kind is not BackendKind.CONTAINER:
        raise ValueError("container invocation requested for a non-container backend")
    environ = os.environ if env is None else env
    image = environ.get(ENV_IMAGE) or config.image_ref
    if not image:
        raise TemplateError("no container image configured")
    values = {"image": image, "results_dir": str(results_dir)}
    command = _expand_template(config.container_command, values)

    argv = command + ["run", "--rm"]
    argv += ["-v", f"{results_dir}:{CONTAINER_RESULTS_DIR}"]
    if sources_path is not None:
        argv += ["-v", f"{sources_path}:{sources_path}:ro"]
    argv += [image]
    argv += list(core_args)

    setup_script = config.setup_script or environ.get(ENV_SETUP_SCRIPT)
    if setup_script:
        quoted = shlex.quote(setup_script)
        argv = ["/bin/sh", "-c", f'. {quoted} && exec "$@"', "container-runner"] + argv
    return argv


def _expand_template(template: str, values: dict[str, str]) -> list[str]:
    class _Strict(dict):
        def __missing__(self, key: str) -> str:
            raise TemplateError(f"unknown placeholder {{{key}}} in container command")

    try:
        expanded = template.format_map(_Strict(values))
    except TemplateError:
        raise
    except (ValueError, IndexError) as exc:
        raise TemplateError(f"bad container command template: {exc}") from exc
    for key, value in values.items():
        if ("{%s}" % key) in template and not value:
            raise TemplateError(f"placeholder {{{key}}} expanded to nothing")
    parts = shlex.split(expanded)
    if not parts:
        raise TemplateError("container command expanded to an empty command line")
    return parts
