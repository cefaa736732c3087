"""Exception types shared across the toolkit."""

from __future__ import annotations


class AdagateError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AdagateError):
    """An input record or file could not be parsed."""


class ValidationError(AdagateError):
    """Parsed data violates a documented invariant."""


class DuplicateIdError(AdagateError):
    """A batch contained the same chunk id more than once."""

    def __init__(self, duplicates: list[str]):
        self.duplicates = list(duplicates)
        super().__init__(f"duplicate chunk ids in one batch: {', '.join(self.duplicates)}")


class UnknownNamespaceError(AdagateError):
    """A query addressed a namespace that was never populated."""


class SchemaError(AdagateError):
    """A results or snapshot file carries an unexpected schema tag."""


class TransportError(AdagateError):
    """A remote backend call failed; carries retry metadata."""

    def __init__(self, message: str, *, retriable: bool = False, attempts: int = 1):
        self.retriable = retriable
        self.attempts = attempts
        super().__init__(message)
