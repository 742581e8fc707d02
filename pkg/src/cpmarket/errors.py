"""Exception types shared across the engine, market and service layers."""
from __future__ import annotations


class CpmError(Exception):
    """Base class for all package errors."""


class NetworkParseError(CpmError):
    """Raised on malformed network text; carries line/column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class NetworkValidationError(CpmError):
    """Raised when an operation requires a valid network but validation failed."""


class QueryError(CpmError):
    """Malformed query: unknown variable or state, or vars spanning cliques."""


class SameCliqueError(CpmError):
    """Target and assumption variables do not share a clique; the edit is not
    structure preserving."""


class ZeroProbabilityError(CpmError):
    """A conditioning event has probability zero."""


class UnknownUserError(CpmError):
    pass


class DuplicateUserError(CpmError):
    pass


class OutOfLimitsError(CpmError):
    """Proposed conditional falls outside the open edit-limits interval."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class LedgerError(CpmError):
    """Ledger stream unusable: bad record, sequence gap, or replay violation."""
