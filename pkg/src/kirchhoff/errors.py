"""Exception hierarchy for the toolkit."""


class KirchhoffError(Exception):
    """Base class for every error raised by this package."""


class InvalidGridError(KirchhoffError, ValueError):
    pass


class ShapeError(KirchhoffError, ValueError):
    pass


class InvalidScaleError(KirchhoffError, ValueError):
    pass


class InvalidExponentError(KirchhoffError, ValueError):
    pass


class IncompleteSpecError(KirchhoffError, ValueError):
    pass


class TrivialFunctionError(KirchhoffError, ValueError):
    """The profile is (numerically) zero, so no fiber maximum exists."""


class DegenerateFiberError(KirchhoffError, ValueError):
    pass


class FlatFiberError(KirchhoffError, RuntimeError):
    pass


class CollapseError(KirchhoffError, RuntimeError):
    """Iterates collapsed onto the zero function."""


class ConvergenceError(KirchhoffError, RuntimeError):
    """An iterative method ran out of iterations.

    The best value seen so far is kept on ``best`` so callers can still
    report it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularSystemError(KirchhoffError, ZeroDivisionError):
    pass


class OutOfHypothesisError(KirchhoffError, ValueError):
    pass
