"""chronosim: co-simulation of real-time kernels, networks and continuous plants."""
from .engine import EventKind, EventQueue, Simulation
from .errors import ChronosimError, ParseError, ValidationError
from .kernel import Policy, response_time_fp
from .runner import metrics, run_scenario, simulate
from .scenario import Scenario, dump_scenario, load_scenario, loads_scenario
from .world import World

__version__ = "0.1.0"

__all__ = [
    "ChronosimError", "EventKind", "EventQueue", "ParseError", "Policy", "Scenario", "Simulation",
    "ValidationError", "World", "dump_scenario", "load_scenario", "loads_scenario", "metrics",
    "response_time_fp", "run_scenario", "simulate",
]
