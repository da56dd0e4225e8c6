"""Exception hierarchy shared by all modules."""


class CGUEError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(CGUEError, ValueError):
    pass


class NumericFailure(CGUEError, ArithmeticError):
    """A numerical routine failed to converge or produced a degenerate result.

    ``matrix_hash`` identifies the offending input when one exists.
    """

    def __init__(self, message, matrix_hash=None):
        super().__init__(message)
        self.matrix_hash = matrix_hash


class CapacityError(CGUEError):
    """A problem size exceeds a guard of the dense implementation."""


class DivergenceError(CGUEError, ArithmeticError):
    """An integral or an iteration does not converge.

    ``trace`` carries the iteration history for iterative solvers.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class SingularityError(CGUEError, ArithmeticError):
    pass


class AmbiguityError(CGUEError):
    """Different sampling directions produced different degeneracy patterns."""

    def __init__(self, message, patterns):
        super().__init__(message)
        self.patterns = patterns


class InfeasibleError(CGUEError):
    pass
