"""Exception and warning types.

Every error carries a stable ``code`` (the class name) that the command line
prints as ``ERROR <code> <message>``.
"""


class StoqtrajError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    @property
    def code(self) -> str:
        return type(self).__name__


class DimensionMismatch(StoqtrajError, ValueError):
    pass


class NonHermitianInput(StoqtrajError, ValueError):
    pass


class InvalidTimeStep(StoqtrajError, ValueError):
    exit_code = 2


class NumericalBlowup(StoqtrajError, FloatingPointError):
    pass


class GridMismatch(StoqtrajError, ValueError):
    pass


class MetadataMissing(StoqtrajError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(StoqtrajError, ValueError):
    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(StoqtrajError, ValueError):
    exit_code = 2


class PositivityWarning(UserWarning):
    """Raised (as a warning) when an evolved density matrix loses positivity."""
