"""Exception types shared across the toolkit.

The CLI maps these onto stable exit codes: validation problems exit 2,
I/O problems (plain ``OSError``) exit 3, numerical failures exit 4.
"""


class OodgateError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OodgateError, ValueError):
    """Invalid arguments, configuration, or data contents."""


class IngestionError(ValidationError):
    """A file could be opened but its contents violate the declared format."""


class NumericalError(OodgateError, ArithmeticError):
    """A numerical procedure failed (e.g. covariance factorization)."""
