"""Monte Carlo and PDE toolkit for the N-particle Brownian branching-selection
system whose empirical CDF follows the F-KPP equation."""

__version__ = "0.1.0"

from frontlab.errors import (
    ConvergenceError,
    InvalidArgumentError,
    NoMedianError,
    NoMonotoneWaveError,
    ResourceError,
    SchemeError,
)

__all__ = [
    "__version__",
    "ConvergenceError",
    "InvalidArgumentError",
    "NoMedianError",
    "NoMonotoneWaveError",
    "ResourceError",
    "SchemeError",
]
