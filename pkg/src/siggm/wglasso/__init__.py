from ._backend import BACKEND
from .solver import PenaltyWeights, SolverOptions, solve, solve_reference

__all__ = ["PenaltyWeights", "SolverOptions", "solve", "solve_reference", "BACKEND"]
