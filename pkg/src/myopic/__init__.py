"""Simulation of swarms whose processes see only their closest neighbor."""
from .engine import CrashEvent, RunSettings, Trace, inject_crash, run, step
from .errors import ScenarioError, UsageError
from .model import Configuration, is_gathered, neighbor_view, occupancy
from .policies import MM, FIXED_POSITIVE, ORDER_BASED, MoveRule, OrthogonalChoice, TiePolicy

__all__ = [
    "CrashEvent", "RunSettings", "Trace", "inject_crash", "run", "step",
    "ScenarioError", "UsageError",
    "Configuration", "is_gathered", "neighbor_view", "occupancy",
    "MM", "FIXED_POSITIVE", "ORDER_BASED", "MoveRule", "OrthogonalChoice", "TiePolicy",
]
__version__ = "0.1.0"
