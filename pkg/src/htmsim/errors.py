"""Exception hierarchy shared by all modules."""


class HTMSimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HTMSimError):
    """Invalid scenario, grid or command-line configuration."""


class DataError(HTMSimError):
    """Problem with input market data."""


class CurveParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CoverageError(DataError):
    """A simulation year has no yield curve."""


class IllPosedSplineError(DataError):
    """Fewer knots than a cubic spline needs."""


class ExtrapolationError(DataError):
    """Rate requested outside the knot range of a curve."""


class DomainError(HTMSimError):
    """Argument outside the domain of an operation."""


class DegeneracyError(HTMSimError):
    """Zero prior portfolio value with nonzero holdings."""
