"""Exception hierarchy shared by all modules."""


class EconLQError(Exception):
    """Base class for every error raised by econlq."""


class InvalidMatrix(EconLQError, ValueError):
    """Matrix has the wrong rank/shape or contains non-finite entries."""


class InvalidDimensions(EconLQError, ValueError):
    pass


class NotSymmetric(EconLQError, ValueError):
    pass


class NumericalFailure(EconLQError, ArithmeticError):
    pass


class NotStabilizable(EconLQError):
    pass


class NotStabilizing(EconLQError):
    """A supplied feedback does not make the closed loop Schur stable."""


class SingularA(EconLQError):
    pass


class Diverged(NumericalFailure):
    pass


class NotConverged(NumericalFailure):
    pass


class NoStabilizingSolution(EconLQError):
    """Iteration converged, but never to a stabilizing solution.

    The last converged solution is kept on ``solution`` for inspection.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class NotStrictlyDissipative(EconLQError):
    pass


class ProblemFormatError(EconLQError, ValueError):
    """Problem or matrix file is malformed; the message names the offending field."""
