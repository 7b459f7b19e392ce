"""Exception types raised by the mining pipeline.

Filesystem problems surface as plain OSError; these classes cover
contract-level failures that callers are expected to branch on.
"""

from __future__ import annotations


class FlakeMinerError(Exception):
    """Base class for all tool-specific errors."""


class InputCsvError(FlakeMinerError):
    """A problem with the project-list csv. Carries the 1-based file line."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingColumn(InputCsvError):
    """The csv header lacks one or more required columns."""


class MalformedRow(InputCsvError):
    """A data row violates the csv contract (arity, required fields)."""


class InvalidProjectName(InputCsvError):
    """PROJECT_NAME contains characters unusable in directory names."""


class IndexUnavailable(FlakeMinerError):
    """The package index could not be reached or read."""


class SourceAcquisitionError(FlakeMinerError):
    """Base class for failures while obtaining project sources."""

    status = "acquisition-failed"


class CloneFailed(SourceAcquisitionError):
    status = "clone-failed"


class RevisionNotFound(SourceAcquisitionError):
    status = "revision-not-found"


class CopyFailed(SourceAcquisitionError):
    status = "copy-failed"


class EnvCreationFailed(FlakeMinerError):
    """Virtual environment creation failed."""


class InstallFailed(FlakeMinerError):
    """A dependency installation step exited non-zero. Carries the log."""

    def __init__(self, message: str, log: str = "") -> None:
        super().__init__(message)
        self.log = log


class TemplateError(FlakeMinerError):
    """Container command template could not be expanded."""


class MalformedXml(FlakeMinerError):
    """A test report could not be parsed as junit XML."""


class NameMismatch(FlakeMinerError):
    """A file name does not follow the expected report naming scheme."""


class EmptyMatrix(FlakeMinerError):
    """A verdict was requested for a test with no recorded outcomes."""
