class InvalidArgumentError(ValueError):
    pass


class NoMedianError(ValueError):
    """The profile never crosses level 1/2 inside the grid."""


class NoMonotoneWaveError(ValueError):
    """Requested wave speed is below the minimal speed sqrt(2)."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResourceError(RuntimeError):
    pass


class SchemeError(RuntimeError):
    """A discrete invariant of the PDE scheme was violated."""
