"""Exception hierarchy shared across the package."""


class GdcFitError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GdcFitError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(InvalidArgumentError):
    """A function was evaluated outside its mathematical domain."""


class DegenerateTraceError(GdcFitError, ValueError):
    """A pulse trace carries no usable signal (e.g. zero area)."""


class RankDeficiencyError(GdcFitError, ArithmeticError):
    """A design or Jacobian matrix is rank deficient."""


class InsufficientDataError(GdcFitError, ValueError):
    """Too few points for the requested estimate."""


class TraceParseError(GdcFitError, ValueError):
    """A trace file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    path : str, optional
        Offending file.
    line : int, optional
        1-based line number of the offending row.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
