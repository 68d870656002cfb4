"""Error hierarchy shared by every pipeline stage.

Each error carries the process exit code the CLI reports for it.
"""
from typing import Optional


class PodtopicsError(Exception):
    """Base error with a human-readable detail and an exit code."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(PodtopicsError):
    """Invalid usage or configuration."""

    exit_code = 1


class DataError(PodtopicsError):
    """Unreadable or inconsistent input data."""

    exit_code = 2

    def __init__(
        self,
        detail: str,
        path: Optional[str] = None,
        line_number: Optional[int] = None,
    ):
        location = ""
        if path is not None:
            location = f"{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += ": "
        elif line_number is not None:
            location = f"line {line_number}: "
        super().__init__(f"{location}{detail}")
        self.path = path
        self.line_number = line_number


class NumericalError(PodtopicsError):
    """A computation produced values outside its contract."""

    exit_code = 3


class StageError(PodtopicsError):
    """Wraps a stage failure with the stage name, keeping the cause's exit code."""

    def __init__(self, stage: str, cause: PodtopicsError):
        super().__init__(f"stage '{stage}' failed: {cause.detail}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
