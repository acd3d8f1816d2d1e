class JumpPutError(Exception):
    """Base class for solver failures"""


class ConfigError(JumpPutError):
    """Run configuration could not be parsed or validated"""


class InvalidMeasureError(JumpPutError):
    """Jump law is not a valid probability measure on (0, inf)"""


class DomainError(JumpPutError):
    """Evaluation requested at a non-positive price"""


class ConstructionError(JumpPutError):
    """Fundamental solutions could not be built"""


class OutOfRangeError(JumpPutError):
    """A boundary or barrier lies outside the working grid"""


class PreconditionError(JumpPutError):
    """Input function is outside the class the operator accepts"""


class ShapeViolationError(JumpPutError):
    """An iterate lost convexity, monotonicity or its bounds"""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class BoundaryNotFoundError(JumpPutError):
    """The boundary objective has no single sign change in (10 x_min, K)"""

    def __init__(self, message, brackets=(), existence_integral=None):
        super().__init__(message)
        self.brackets = list(brackets)
        self.existence_integral = existence_integral


class IterationError(JumpPutError):
    """Boundary search failed at a given iterate"""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class StepSizeError(JumpPutError):
    """Monte Carlo step too coarse for the jump intensity"""
