"""Deterministic discrete-event simulation of the bus network."""

from .engine import EventLog, EventRecord, run
from .routes import Route
from .scenario import ScenarioConfig, ScenarioError, load_scenario, load_scenario_file

__all__ = [
    "EventLog",
    "EventRecord",
    "Route",
    "ScenarioConfig",
    "ScenarioError",
    "load_scenario",
    "load_scenario_file",
    "run",
]
