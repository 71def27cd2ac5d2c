"""Fairness agents: windowed fairness metric, user compatibility, item preference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .model import Item, ScoredList, StepRecord

METRIC_KINDS = ("proportional_exposure", "list_presence")


@dataclass(frozen=True)
class AgentSpec:
    """Configuration of one fairness agent.

    An item is protected for the agent when ``item.features[feature]`` is
    one of ``values``.  ``target`` is the desired average share of
    protected items per output list; ``delta`` is the score increment used
    by the rescore choice mechanism.
    """

    name: str
    feature: str
    values: frozenset = field(default_factory=frozenset)
    metric_kind: str = "proportional_exposure"
    target: float = 0.2
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", frozenset(str(v) for v in self.values))
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(
                f"agent {self.name!r}: unknown metric {self.metric_kind!r}, expected one of {METRIC_KINDS}"
            )
        if not 0.0 < self.target <= 1.0:
            raise ValueError(f"agent {self.name!r}: target must lie in (0, 1], got {self.target}")
        if self.delta <= 0:
            raise ValueError(f"agent {self.name!r}: delta must be positive, got {self.delta}")

    def matches(self, item_features: Mapping[str, str]) -> bool:
        value = item_features.get(self.feature)
        return value is not None and str(value) in self.values


def protected_ids(agent: AgentSpec, catalog: Mapping[str, Item]) -> frozenset:
    return frozenset(i for i, item in catalog.items() if item.is_protected(agent.name))


def _protected_count(record: StepRecord, protected) -> int:
    return sum(1 for item_id, _ in record.output_list if item_id in protected)


def fairness_proportional(agent: AgentSpec, win: Sequence[StepRecord], protected) -> float:
    """Mean protected share of the window's output lists relative to the target, clamped to 1."""
    if not win:
        return 0.0
    total = 0.0
    for record in win:
        k = len(record.output_list)
        if k:
            total += _protected_count(record, protected) / k
    return min(1.0, (total / len(win)) / agent.target)


def fairness_list_presence(agent: AgentSpec, win: Sequence[StepRecord], protected) -> float:
    if not win:
        return 0.0
    hits = sum(1 for r in win if any(i in protected for i, _ in r.output_list))
    return hits / len(win)


def fairness(agent: AgentSpec, win: Sequence[StepRecord], protected) -> float:
    if agent.metric_kind == "list_presence":
        return fairness_list_presence(agent, win, protected)
    return fairness_proportional(agent, win, protected)


def binary_entropy(q: float) -> float:
    if q <= 0.0 or q >= 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def compatibility_entropy(profile_items: Sequence[Item], agent: AgentSpec) -> float:
    """Entropy of the user's history over the agent's protected / unprotected split.

    Users whose past items mix both groups get values near 1 and are the
    best targets for promoting protected items.
    """
    if not profile_items:
        raise ValueError(
            f"cannot derive compatibility with {agent.name!r} from an empty profile; "
            "supply an explicit compatibility value instead"
        )
    q = sum(1 for item in profile_items if item.is_protected(agent.name)) / len(profile_items)
    return binary_entropy(q)


def agent_preference(agent: AgentSpec, base_list: ScoredList, catalog: Mapping[str, Item]) -> ScoredList:
    """Score the base list's items 1 (protected) or 0, keeping base order within each group."""
    if not len(base_list):
        raise ValueError("agent preference needs a non-empty base list")
    flags = []
    for item_id, _ in base_list:
        item = catalog.get(item_id)
        if item is None:
            raise KeyError(f"item {item_id!r} is not in the catalog")
        flags.append((item_id, 1.0 if item.is_protected(agent.name) else 0.0))
    # stable sort keeps the recommender order among equal agent scores
    return ScoredList(sorted(flags, key=lambda p: -p[1]))


def preference_from_protected(base_list: ScoredList, protected) -> ScoredList:
    """Fast path of :func:`agent_preference` when the protected set is precomputed."""
    hits = [(i, 1.0) for i, _ in base_list if i in protected]
    rest = [(i, 0.0) for i, _ in base_list if i not in protected]
    return ScoredList(hits + rest)
