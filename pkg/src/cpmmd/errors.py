"""Exception types shared across the package.

Every error raised by cpmmd derives from :class:`CpmmdError`. Pipeline code
annotates exceptions with the stage they escaped from via the ``stage``
attribute so callers can tell (say) a degenerate split from a degenerate
calibration without parsing messages.
"""

from __future__ import annotations


class CpmmdError(Exception):
    """Base class for all cpmmd errors."""

    stage: str | None = None


class ContractViolationError(CpmmdError, ValueError):
    """An argument violates a documented precondition (shape, dtype, range)."""


class InsufficientSampleError(CpmmdError, ValueError):
    """Too few points per class for the requested operation."""


class UnsupportedConfigurationError(CpmmdError, ValueError):
    """A combination of options the implementation deliberately rejects."""


class DegenerateDataError(CpmmdError, ValueError):
    """Data admits no usable statistic (all points identical, zero proxy, ...)."""


class CsvParseError(CpmmdError, ValueError):
    """Malformed CSV input; carries file/row/column location."""

    def __init__(self, message: str, path: str = "", row: int | None = None,
                 column: int | None = None):
        loc = path
        if row is not None:
            loc += f":row {row}"
        if column is not None:
            loc += f":col {column}"
        super().__init__(f"{message} ({loc})" if loc else message)
        self.path = path
        self.row = row
        self.column = column


class NumericalAbortError(CpmmdError, RuntimeError):
    """A non-finite value appeared during optimization.

    ``trajectory`` holds the records collected up to (and excluding) the
    offending step so the pathology can be inspected.
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
