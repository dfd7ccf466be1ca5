"""Cluster-based dual proximal gradient solver for multi-cluster networks."""

from .problem import AgentSpec, Coupling, ScenarioSpec, Weights
from .solver import CDPG, SolverConfig, run

__version__ = "0.1.0"

__all__ = ["AgentSpec", "CDPG", "Coupling", "ScenarioSpec", "SolverConfig", "Weights", "run"]
