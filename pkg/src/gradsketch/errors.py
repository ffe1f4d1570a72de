"""Exception types shared across the package.

Invalid arguments raise plain :class:`ValueError` so callers can keep their
usual handling; the classes here cover failures that carry extra state or
need a dedicated process exit code in the CLI.
"""

from __future__ import annotations


class NumericError(RuntimeError):
    """A numerical routine produced non-finite values.

    ``iteration`` records how far an iterative solver got before failing,
    or ``None`` for one-shot computations.
    """

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class SearchExhaustedError(RuntimeError):
    """Doubling search hit its upper bound without reaching the target.

    The trace accumulated so far is attached so callers can inspect or
    persist it.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class UndefinedCorrelationError(ValueError):
    """Pearson correlation requested on a zero-variance score sequence."""
