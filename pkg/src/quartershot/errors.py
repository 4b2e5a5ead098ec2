"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: file/format problems exit 2,
validation problems exit 3, numeric problems exit 4.
"""


class QuartershotError(Exception):
    """Base class for all package errors."""


class FormatError(QuartershotError):
    """A file is missing, truncated, or has a bad magic/header."""


class ValidationError(QuartershotError):
    """An input violates a documented invariant (shapes, ranges, topology)."""


class NumericError(QuartershotError):
    """A computation degenerated (non-finite values, singular geometry)."""
