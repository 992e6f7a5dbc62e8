"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all engine failures."""


class UsageError(EngineError):
    """Invalid invocation or configuration (CLI exit code 1)."""


class DataError(EngineError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class BvhParseError(DataError):
    """BVH syntax or consistency failure, located by source line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
