"""Exception types raised by the solver stack."""


class InvalidArgumentError(ValueError):
    """Raised for malformed inputs: bad mesh sizes, degenerate boxes, etc."""


class CoefficientRangeError(ValueError):
    """Raised when a conductivity leaves the admissible range (sigma <= 0)."""


class SolverError(RuntimeError):
    """Raised when a linear solve fails or misses its residual target."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configuration files."""
