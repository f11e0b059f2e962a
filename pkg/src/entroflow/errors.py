"""Exception hierarchy shared by all entroflow modules."""


class EntroflowError(Exception):
    """Base class for every error raised by this package."""


# numerics
class InvalidMatrix(EntroflowError, ValueError):
    pass


class IllConditioned(EntroflowError, ArithmeticError):
    def __init__(self, condition):
        super().__init__(f"condition estimate {condition:.3e} exceeds 1e12")
        self.condition = condition


class EmptyProblem(EntroflowError, ValueError):
    pass


class DivergedDerivative(EntroflowError, ArithmeticError):
    pass


# features
class RangeViolation(EntroflowError, ValueError):
    pass


class RedundantMode(EntroflowError, ValueError):
    pass


class ZeroMode(EntroflowError, ValueError):
    pass


class DegenerateDirection(EntroflowError, ValueError):
    pass


class BadGrid(EntroflowError, ValueError):
    pass


# mdp
class NotSimplex(EntroflowError, ValueError):
    pass


class CostOutOfRange(EntroflowError, ValueError):
    pass


class NegativeTransition(EntroflowError, ValueError):
    pass


# evaluation
class NotConverged(EntroflowError, ArithmeticError):
    def __init__(self, residual, iterations):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class NotRealizable(EntroflowError, ValueError):
    def __init__(self, residual):
        super().__init__(f"Q is not realizable in the feature span (residual rms {residual:.3e})")
        self.residual = residual


# gradflow
class DegenerateGeometry(EntroflowError, ArithmeticError):
    pass


class StepFailure(EntroflowError, ArithmeticError):
    """Adaptive step size underflowed.  ``trajectory`` holds the records logged so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class DivergedFlow(EntroflowError, ArithmeticError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class InsufficientData(EntroflowError, ValueError):
    pass


# cli
class ConfigError(EntroflowError, ValueError):
    pass
