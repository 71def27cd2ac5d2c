"""Dynamic multi-agent fairness-aware re-ranking with a user-arrival simulator."""

from .agents import AgentSpec
from .allocation import AllocationInput
from .choice import Ballot, ChoiceConfig
from .config import ExperimentConfig
from .engine import Dataset, RunResult, Simulation, ingest, run, sweep
from .model import AgentAllocation, History, Item, ScoredList, StepRecord, UserProfile

__all__ = [
    "AgentAllocation",
    "AgentSpec",
    "AllocationInput",
    "Ballot",
    "ChoiceConfig",
    "Dataset",
    "ExperimentConfig",
    "History",
    "Item",
    "RunResult",
    "ScoredList",
    "Simulation",
    "StepRecord",
    "UserProfile",
    "ingest",
    "run",
    "sweep",
]
