"""Domain types shared across the re-ranking engine.

Everything here is an immutable value except :class:`History`, which is an
append-only log owned by a single writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence


class HistoryError(ValueError):
    """Raised when a record is appended out of order."""


@dataclass(frozen=True)
class Item:
    id: str
    features: Mapping[str, str] = field(default_factory=dict)
    sensitive_flags: Mapping[str, bool] = field(default_factory=dict)

    def is_protected(self, agent: str) -> bool:
        return bool(self.sensitive_flags.get(agent, False))


@dataclass(frozen=True)
class UserProfile:
    id: str
    attributes: Mapping[str, str] = field(default_factory=dict)
    compatibility: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for agent, value in self.compatibility.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(
                    f"compatibility of user {self.id!r} with {agent!r} is {value}, outside [0, 1]"
                )


class ScoredList:
    """An ordered list of ``(item_id, score)`` pairs, best first.

    The constructor keeps the given order and only checks that scores never
    increase and item ids are unique; that lets ingested recommender output
    and agent preference lists carry their own tie order.  Use
    :meth:`from_pairs` to get the canonical order (score descending, then
    item id ascending).
    """

    __slots__ = ("_entries", "_index")

    def __init__(self, entries: Iterable[tuple[str, float]] = ()):
        items = tuple((str(i), float(s)) for i, s in entries)
        index: dict[str, int] = {}
        for pos, (item_id, score) in enumerate(items):
            if item_id in index:
                raise ValueError(f"duplicate item {item_id!r} in scored list")
            if pos and score > items[pos - 1][1]:
                raise ValueError(
                    f"scores must be non-increasing: {items[pos - 1]} precedes {(item_id, score)}"
                )
            index[item_id] = pos
        self._entries = items
        self._index = index

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]]) -> "ScoredList":
        return cls(sorted(pairs, key=lambda p: (-float(p[1]), str(p[0]))))

    @property
    def entries(self) -> tuple[tuple[str, float], ...]:
        return self._entries

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self._entries)

    @property
    def scores(self) -> tuple[float, ...]:
        return tuple(s for _, s in self._entries)

    def score_of(self, item_id: str, default: float | None = None) -> float:
        pos = self._index.get(item_id)
        if pos is None:
            if default is None:
                raise KeyError(item_id)
            return default
        return self._entries[pos][1]

    def position(self, item_id: str) -> int:
        return self._index[item_id]

    def top(self, k: int) -> "ScoredList":
        return ScoredList(self._entries[:k])

    def __contains__(self, item_id) -> bool:
        return item_id in self._index

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, pos):
        return self._entries[pos]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoredList):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(self._entries)

    def __repr__(self) -> str:
        body = ", ".join(f"{i}:{s:g}" for i, s in self._entries)
        return f"ScoredList([{body}])"


class AgentAllocation:
    """Non-negative weights over agents; all-zero means no agent is allocated."""

    __slots__ = ("_weights",)

    TOLERANCE = 1e-9

    def __init__(self, weights: Mapping[str, float]):
        clean = {str(k): float(v) for k, v in weights.items()}
        for name, w in clean.items():
            if not 0.0 <= w <= 1.0 + self.TOLERANCE:
                raise ValueError(f"allocation weight for {name!r} is {w}, outside [0, 1]")
        total = sum(clean.values())
        if total > 0 and abs(total - 1.0) > self.TOLERANCE:
            raise ValueError(f"allocation weights sum to {total}, expected 0 or 1")
        self._weights = MappingProxyType(clean)

    @classmethod
    def zeros(cls, agents: Iterable[str]) -> "AgentAllocation":
        return cls({a: 0.0 for a in agents})

    @classmethod
    def one_hot(cls, agents: Iterable[str], chosen: str) -> "AgentAllocation":
        return cls({a: 1.0 if a == chosen else 0.0 for a in agents})

    @property
    def weights(self) -> Mapping[str, float]:
        return self._weights

    @property
    def is_empty(self) -> bool:
        return not any(self._weights.values())

    def __getitem__(self, agent: str) -> float:
        return self._weights.get(agent, 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentAllocation):
            return NotImplemented
        return dict(self._weights) == dict(other._weights)

    def __repr__(self) -> str:
        return f"AgentAllocation({dict(self._weights)})"


@dataclass(frozen=True)
class StepRecord:
    time: int
    user_id: str
    base_list: ScoredList
    agent_lists: Mapping[str, ScoredList]
    output_list: ScoredList
    allocation: AgentAllocation
    # in-loop values the mechanisms saw at this step
    fairness: Mapping[str, float] = field(default_factory=dict)
    compatibility: Mapping[str, float] = field(default_factory=dict)


class History:
    """Append-only sequence of step records with a trailing evaluation window."""

    def __init__(self, window_size: int = 100, records: Sequence[StepRecord] = ()):
        if int(window_size) <= 0:
            raise ValueError(f"window size must be positive, got {window_size}")
        self.window_size = int(window_size)
        self._records: list[StepRecord] = []
        for r in records:
            self.append(r)

    @property
    def records(self) -> tuple[StepRecord, ...]:
        return tuple(self._records)

    def append(self, record: StepRecord) -> "History":
        expected = len(self._records)
        if record.time != expected:
            raise HistoryError(
                f"record has time {record.time} but history expects t={expected}"
            )
        self._records.append(record)
        return self

    def window(self) -> Sequence[StepRecord]:
        return self._records[-self.window_size:] if self._records else []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, t):
        return self._records[t]


def append(history: History, record: StepRecord) -> History:
    return history.append(record)


def window(history: History) -> Sequence[StepRecord]:
    return history.window()
