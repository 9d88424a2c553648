"""Objective-function-free adaptive regularisation in random subspaces."""

from .baselines import BaselineConfig, run_baseline
from .problems import ProblemInstance, embed, make_embedded, make_problem
from .solver import SolverConfig, run
from .trace import RunTrace

__all__ = [
    "BaselineConfig",
    "ProblemInstance",
    "RunTrace",
    "SolverConfig",
    "embed",
    "make_embedded",
    "make_problem",
    "run",
    "run_baseline",
]

__version__ = "0.1.0"
