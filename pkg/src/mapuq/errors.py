"""Exception hierarchy shared by all modules.

The CLI maps these to exit codes: invalid input -> 2, convergence -> 3,
numeric failures -> 4.
"""


class UQError(Exception):
    """Base class for every error raised by :mod:`mapuq`."""


class InvalidInputError(UQError, ValueError):
    """Bad shapes, non-finite data or out-of-range parameters."""


class ConvergenceError(UQError, RuntimeError):
    """An iterative solver stopped before meeting its tolerances.

    Attributes
    ----------
    last_iterate : ndarray or None
        The iterate held when the solver gave up.
    residual : float
        Largest of the normalised residuals at that point.
    report : object or None
        Solver-specific report (e.g. a ``SolveReport``), when one exists.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan"), report=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.report = report


class NumericError(UQError, ArithmeticError):
    """A special-function evaluation or inversion failed."""


class DegenerateSweepError(UQError):
    """Membership along a sweep direction is not monotone at the returned bound."""


class ChainFailureError(UQError, RuntimeError):
    """The sampler hit a non-finite potential value."""

    def __init__(self, message, iteration=None, state=None):
        super().__init__(message)
        self.iteration = iteration
        self.state = state
