"""Constrained jump diffusions driven by maximal monotone operators.

Simulation, controlled skeletons, action minimization and Monte Carlo checks
of small-noise large-deviation bounds.
"""

from ._accel import backend_name
from .errors import (ConfigError, DimensionError, EmptyDomainError, GridTooCoarseError,
                     HypothesisError, MvldpError, ResolventError, SimulationError,
                     TiltError)

__version__ = "0.1.0"

__all__ = [
    "backend_name", "ConfigError", "DimensionError", "EmptyDomainError",
    "GridTooCoarseError", "HypothesisError", "MvldpError", "ResolventError",
    "SimulationError", "TiltError", "__version__",
]
