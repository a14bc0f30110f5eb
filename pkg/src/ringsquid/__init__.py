"""Single-particle and mean-field simulation of self-heterodyne imaging of a
ring condensate with a rotating weak link, plus the fringe analysis that
reads the phase drop back out of the images."""

from .config import Config, TargetTrapParams, load_config, make_grid, to_dimensionless
from .errors import (AliasingError, AnalysisError, ConfigError, ConvergenceError,
                     NumericalError, ParameterError, RegimeWarning)
from .ring import solve_ground_state

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "AnalysisError", "Config", "ConfigError", "ConvergenceError",
    "NumericalError", "ParameterError", "RegimeWarning", "TargetTrapParams", "load_config",
    "make_grid", "solve_ground_state", "to_dimensionless",
]
