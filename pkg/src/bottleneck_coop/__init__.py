"""Cooperative bottleneck resolution for connected automated vehicles.

A turn-based simulation of a two-lane road where one lane is blocked, with
CAVs negotiating right of way over V2V and humans acting stochastically.
"""

from .core import Lane, ParameterError, ScenarioParams, Variant, Vehicle, VehicleKind, validate_params
from .engine import Simulation, TurnEvent, replay, run
from .metrics import RunResult, flow_balance

__all__ = [
    "Lane", "ParameterError", "ScenarioParams", "Variant", "Vehicle", "VehicleKind",
    "validate_params", "Simulation", "TurnEvent", "replay", "run", "RunResult", "flow_balance",
]
__version__ = "0.1.0"
