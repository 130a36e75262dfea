"""Auxiliary task set selection: transfer graphs, candidate search and a multi-bandit."""

from .core import MetricKind, Scenario, TaskSet, taskset_from_list
from .environment import ReplayEnvironment, SimulatedEnvironment, SyntheticModel
from .errors import AuxselError

__version__ = "0.1.0"

__all__ = [
    "AuxselError",
    "MetricKind",
    "ReplayEnvironment",
    "Scenario",
    "SimulatedEnvironment",
    "SyntheticModel",
    "TaskSet",
    "taskset_from_list",
]
