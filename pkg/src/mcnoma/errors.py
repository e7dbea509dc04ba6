"""Exception types shared across the package."""


class McnomaError(Exception):
    """Base class for all package errors."""


class InputError(McnomaError, ValueError):
    """Arguments violate an operation's preconditions."""


class ValidationError(McnomaError, ValueError):
    """A data object violates one of its invariants."""


class ParseError(McnomaError, ValueError):
    """A file could not be decoded.

    Parameters
    ----------
    message : str
        What went wrong.
    offset : int
        Byte offset in the file at which decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericError(McnomaError, ArithmeticError):
    """A matrix that must be positive definite is not (e.g. singular noise)."""


class InfeasibleError(McnomaError):
    """The requested rates cannot be met by any finite power."""


class ConvergenceError(McnomaError):
    """An iterative solver hit its iteration cap.

    The ``diagnostics`` attribute carries the residuals at the last iterate.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class EnumerationCapError(McnomaError):
    """Too many decoding orders to enumerate; tighten the tie tolerance."""


class OutsideHullError(McnomaError):
    """A target rate vector is not a convex combination of the vertices.

    ``coordinate`` is the user index with the largest violation and
    ``violation`` its magnitude.
    """

    def __init__(self, message, coordinate, violation):
        super().__init__(message)
        self.coordinate = coordinate
        self.violation = violation
