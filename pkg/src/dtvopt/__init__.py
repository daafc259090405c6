"""Distributed tracking of time-varying convex optima by multi-agent teams.

Agents with single- or double-integrator dynamics cooperatively follow the
minimiser of a sum of local time-varying costs, using only relative
information from neighbours.
"""

__version__ = "0.1.0"

from .controllers import GainParams, TeamState, check_gain_conditions
from .costs import AssumptionError, CostModel, TeamCost, TimeSignal, preset_costs
from .graph import Graph, lambda2, laplacian, proximity_graph, ring
from .kernels import BACKEND
from .scenario import PRESETS, ScenarioConfig, ScenarioError, parse_scenario
from .sim import IntegratorConfig, Problem, SimulationAbort, TrajectoryLog, integrate
from .switching import LayerSpec

__all__ = [
    "AssumptionError", "BACKEND", "CostModel", "GainParams", "Graph", "IntegratorConfig",
    "LayerSpec", "PRESETS", "Problem", "ScenarioConfig", "ScenarioError", "SimulationAbort",
    "TeamCost", "TeamState", "TimeSignal", "TrajectoryLog", "check_gain_conditions",
    "integrate", "lambda2", "laplacian", "parse_scenario", "preset_costs", "proximity_graph",
    "ring", "__version__",
]
