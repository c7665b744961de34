"""Exception taxonomy shared across the package.

Every error raised on a caller-visible contract derives from OptbenchError,
so `except OptbenchError` catches anything this package signals deliberately.
"""

from __future__ import annotations


class OptbenchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OptbenchError, ValueError):
    """An input violated a documented precondition or invariant.

    The message starts with the offending field or argument name.
    """


class DegenerateVolatilityError(OptbenchError, ValueError):
    """sigma * sqrt(T) is too small for the pricing formula to be meaningful."""


class NoSolutionError(OptbenchError, ValueError):
    """No volatility in the search bracket reproduces the observed price."""


class SchemaError(OptbenchError, ValueError):
    """A CSV header does not match the expected column layout."""


class CsvRowError(OptbenchError, ValueError):
    """Too many malformed rows in a CSV file to continue safely."""

    def __init__(self, message: str, bad_rows: list[tuple[int, str]] | None = None):
        super().__init__(message)
        # (line_number, problem) pairs, 1-based including the header line
        self.bad_rows = bad_rows or []


class IncompatibleModelError(OptbenchError, ValueError):
    """A model file is corrupt, truncated, or of an unrecognized kind/version."""


class InconsistentEvaluationError(OptbenchError, ValueError):
    """An evaluation was requested against data the model was not trained from."""


class DivergenceError(OptbenchError, RuntimeError):
    """Training produced non-finite or absurdly large losses."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class UsageError(OptbenchError, ValueError):
    """Bad command line arguments or configuration keys."""
