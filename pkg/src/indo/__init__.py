"""Exact distributed second-order consensus optimization (INDO and ESOM)."""

from .inner import FixedCount, Forcing
from .network import Network, generate_rgg, metropolis_weights
from .objectives import logistic_load, quadratic_generate, quadratic_solution
from .pmm import SolverConfig, run

__all__ = [
    "FixedCount", "Forcing", "Network", "SolverConfig", "generate_rgg",
    "logistic_load", "metropolis_weights", "quadratic_generate",
    "quadratic_solution", "run",
]
__version__ = "0.1.0"
