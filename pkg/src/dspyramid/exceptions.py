"""Exception types raised across the package."""


class DspError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DspError, ValueError):
    """An input violates a documented precondition or invariant."""


class FormatError(DspError, ValueError):
    """A file does not match the expected binary or JSON layout."""


class CorruptionError(FormatError):
    """A file has the right framing but inconsistent contents."""


class DegenerateInputError(ValidationError):
    """An input is structurally valid but numerically degenerate (e.g. all-zero)."""
