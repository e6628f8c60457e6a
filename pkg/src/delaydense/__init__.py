"""delaydense: probabilistic analysis of delay differential equations.

Evolves ensemble densities under DDE dynamics, estimates asymptotic
densities, rasters basins of attraction, tracks chaotic saddles, and
computes Lyapunov spectra and fractal dimensions.
"""

__version__ = "0.1.0"

from .models import (DelaySystem, HistoryVector, InitialFamily, ModelId,
                     FamilyId, SolutionPath, constant, initial_history,
                     linear, make_system, ode_generated, rhs, sinusoidal)
from .core import euler_step, integrate, scalar_solution_map, time_one_map
from .kernels import backend_name, has_compiled

__all__ = [
    "DelaySystem", "HistoryVector", "InitialFamily", "ModelId", "FamilyId",
    "SolutionPath", "constant", "initial_history", "linear", "make_system",
    "ode_generated", "rhs", "sinusoidal", "euler_step", "integrate",
    "scalar_solution_map", "time_one_map", "backend_name", "has_compiled",
]
