"""Exception hierarchy shared by all pipeline stages.

Exit-code mapping (see cli): UsageError -> 1, DataError -> 2, NumericError -> 3.
"""


class PipelineError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 2


class UsageError(PipelineError):
    """Invalid configuration or command-line usage."""

    exit_code = 1


class DataError(PipelineError):
    """Input data violates a contract (missing file, bad record, empty window)."""

    exit_code = 2


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class NumericError(PipelineError):
    """Numeric failure: NaN in an embedding, zero-norm axis, and the like."""

    exit_code = 3
