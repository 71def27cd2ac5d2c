"""Allocation mechanisms: map agent fairness and compatibility to a weight vector.

Agent order in the input mappings is the registration order and decides ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import AgentAllocation

MECHANISMS = ("least_fair", "lottery", "weighted", "none")


@dataclass(frozen=True)
class AllocationInput:
    fairness: Mapping[str, float]
    compatibility: Mapping[str, float]

    def __post_init__(self):
        if set(self.fairness) != set(self.compatibility):
            raise ValueError(
                f"fairness agents {sorted(self.fairness)} differ from compatibility agents {sorted(self.compatibility)}"
            )

    @property
    def agents(self) -> list[str]:
        return list(self.fairness)

    def products(self) -> dict[str, float]:
        # agent unfairness times user compatibility
        return {a: (1.0 - self.fairness[a]) * self.compatibility[a] for a in self.fairness}


def allocate_least_fair(inp: AllocationInput) -> AgentAllocation:
    agents = inp.agents
    if not agents or all(inp.fairness[a] == 1.0 for a in agents):
        return AgentAllocation.zeros(agents)
    # min() returns the first minimum, i.e. the earliest registered agent
    chosen = min(agents, key=lambda a: inp.fairness[a])
    return AgentAllocation.one_hot(agents, chosen)


def allocate_weighted(inp: AllocationInput) -> AgentAllocation:
    products = inp.products()
    total = sum(products.values())
    if total <= 0:
        return AgentAllocation.zeros(products)
    return AgentAllocation({a: p / total for a, p in products.items()})


def allocate_lottery(inp: AllocationInput, rng: np.random.Generator) -> AgentAllocation:
    """Draw a single agent with probability proportional to unfairness times compatibility."""
    products = inp.products()
    # always consume exactly one variate so the stream stays aligned across steps
    u = rng.random()
    total = sum(products.values())
    if total <= 0:
        return AgentAllocation.zeros(products)
    threshold = u * total
    acc = 0.0
    chosen = None
    for agent, p in products.items():
        if p <= 0:
            continue
        acc += p
        chosen = agent
        if threshold < acc:
            break
    return AgentAllocation.one_hot(products, chosen)


def allocate_none(inp: AllocationInput) -> AgentAllocation:
    return AgentAllocation.zeros(inp.agents)


def allocate(mechanism: str, inp: AllocationInput, rng: np.random.Generator | None = None) -> AgentAllocation:
    if mechanism == "least_fair":
        return allocate_least_fair(inp)
    if mechanism == "weighted":
        return allocate_weighted(inp)
    if mechanism == "lottery":
        if rng is None:
            raise ValueError("lottery allocation needs a random generator")
        return allocate_lottery(inp, rng)
    if mechanism == "none":
        return allocate_none(inp)
    raise ValueError(f"unknown allocation mechanism {mechanism!r}, expected one of {MECHANISMS}")
