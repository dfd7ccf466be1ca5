"""Operator assembly and the CDPG iteration."""

from .engine import (CDPG, Metrics, RunResult, SolverConfig, SolverTrace, cdpg_iterate,
                     grad_p, metrics, recover_primal, run)
from .operators import (AgentOperators, Assembly, EdgeBlock, StepSizes, assemble,
                        lipschitz_h, power_iteration, step_sizes, tau_max)
from .state import DualState, EdgeMultipliers, ErgodicAverage, ergodic_average

__all__ = [
    "AgentOperators", "Assembly", "CDPG", "DualState", "EdgeBlock", "EdgeMultipliers",
    "ErgodicAverage", "Metrics", "RunResult", "SolverConfig", "SolverTrace", "StepSizes",
    "assemble", "cdpg_iterate", "ergodic_average", "grad_p", "lipschitz_h", "metrics",
    "power_iteration", "recover_primal", "run", "step_sizes", "tau_max",
]
