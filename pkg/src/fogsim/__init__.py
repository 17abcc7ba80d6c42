"""Discrete-time simulator for two-tier fog computing with predictive offloading."""

from fogsim.config import ConfigError, SimulationConfig, preset
from fogsim.engine import SimulationResult, run, run_motivating_example, sweep
from fogsim.pora import NumericalFailure, SlotDecision

__all__ = [
    "ConfigError",
    "NumericalFailure",
    "SimulationConfig",
    "SimulationResult",
    "SlotDecision",
    "preset",
    "run",
    "run_motivating_example",
    "sweep",
]
