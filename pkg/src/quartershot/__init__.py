"""quartershot: deterministic rendering and geometry engine for posed
one-quarter headshot neural fields."""

__version__ = "0.1.0"

from .errors import FormatError, NumericError, QuartershotError, ValidationError

__all__ = [
    "__version__",
    "FormatError",
    "NumericError",
    "QuartershotError",
    "ValidationError",
]
