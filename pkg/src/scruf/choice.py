"""Choice mechanisms that fuse the recommender's list with agent preference lists.

Each mechanism returns the top-k of a full ranking over the shared candidate
set.  Remaining ties are always settled in favour of the item the recommender
ranked higher (its position in the base list).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import AgentAllocation, ScoredList

MECHANISMS = ("rescore", "borda", "copeland", "ranked_pairs")
RECOMMENDER = "__recommender__"

# margins this close to zero are treated as ties
MARGIN_EPS = 1e-12


class CandidateMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Ballot:
    voter: str
    weight: float
    ranking: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        if self.weight < 0:
            raise ValueError(f"ballot of {self.voter!r} has negative weight {self.weight}")
        if len(set(self.ranking)) != len(self.ranking):
            raise ValueError(f"ballot of {self.voter!r} ranks an item twice")

    @classmethod
    def from_list(cls, voter: str, weight: float, scored: ScoredList) -> "Ballot":
        return cls(voter, float(weight), scored.item_ids)


@dataclass(frozen=True)
class ChoiceConfig:
    lam: float = 1.0
    output_size: int = 10
    deltas: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"recommender weight must lie in [0, 1], got {self.lam}")
        if self.output_size <= 0:
            raise ValueError(f"output size must be positive, got {self.output_size}")

    def delta(self, agent: str) -> float:
        return float(self.deltas.get(agent, 1.0))


def _check_candidates(reference: ScoredList, others: Mapping[str, ScoredList]):
    expected = set(reference.item_ids)
    for name, lst in others.items():
        got = set(lst.item_ids)
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise CandidateMismatch(
                f"list of {name!r} does not cover the base candidates: missing {missing}, extra {extra}"
            )


def _check_ballots(ballots: Sequence[Ballot]) -> tuple:
    if not ballots:
        raise ValueError("at least one ballot is required")
    candidates = ballots[0].ranking
    if not candidates:
        raise ValueError("empty candidate set")
    expected = set(candidates)
    for b in ballots[1:]:
        if set(b.ranking) != expected:
            raise CandidateMismatch(
                f"ballot of {b.voter!r} ranks {sorted(set(b.ranking) ^ expected)} inconsistently"
            )
    return candidates


def _tie_rank(candidates, base: ScoredList | None) -> dict:
    """Secondary sort key: base position if a base list is given, else item id order."""
    if base is not None:
        return {c: base.position(c) for c in candidates}
    return {c: r for r, c in enumerate(sorted(candidates))}


def _top_k(scores: Mapping[str, float], tie: Mapping[str, int], k: int) -> ScoredList:
    if k > len(scores):
        raise ValueError(f"output size {k} exceeds the {len(scores)} candidates")
    order = sorted(scores, key=lambda c: (-scores[c], tie[c]))
    return ScoredList((c, scores[c]) for c in order[:k])


def rescore(base: ScoredList, beta: AgentAllocation, agent_lists: Mapping[str, ScoredList],
            cfg: ChoiceConfig) -> ScoredList:
    """Blend recommender scores with allocation-weighted agent bonuses.

    score(v) = lam * r(v) + (1 - lam) * sum_i beta_i * delta_i * s_i(v)
    """
    _check_candidates(base, agent_lists)
    lam = cfg.lam
    scores = {item: lam * r for item, r in base}
    for agent, lst in agent_lists.items():
        w = beta[agent]
        if w <= 0:
            continue
        bonus = (1.0 - lam) * w * cfg.delta(agent)
        for item, s in lst:
            scores[item] += bonus * s
    return _top_k(scores, _tie_rank(scores, base), cfg.output_size)


def borda(ballots: Sequence[Ballot], k: int, base: ScoredList | None = None) -> ScoredList:
    candidates = _check_ballots(ballots)
    if not any(b.weight > 0 for b in ballots):
        raise ValueError("borda needs at least one ballot with positive weight")
    n = len(candidates)
    totals = dict.fromkeys(candidates, 0.0)
    for b in ballots:
        if b.weight <= 0:
            continue
        for p, c in enumerate(b.ranking):
            totals[c] += b.weight * (n - 1 - p)
    return _top_k(totals, _tie_rank(candidates, base), k)


def margin_matrix(ballots: Sequence[Ballot], candidates: Sequence[str]) -> np.ndarray:
    """Antisymmetric matrix M with M[i, j] = weight preferring i to j minus weight preferring j to i."""
    idx = {c: n for n, c in enumerate(candidates)}
    M = np.zeros((len(candidates), len(candidates)))
    for b in ballots:
        if b.weight == 0:
            continue
        pos = np.empty(len(candidates))
        for p, c in enumerate(b.ranking):
            pos[idx[c]] = p
        # i beats j on this ballot when its position is smaller
        M += b.weight * np.sign(pos[None, :] - pos[:, None])
    M[np.abs(M) <= MARGIN_EPS] = 0.0
    return M


def pairwise_margins(ballots: Sequence[Ballot]) -> dict:
    candidates = _check_ballots(ballots)
    M = margin_matrix(ballots, candidates)
    return {
        (a, b): float(M[i, j])
        for i, a in enumerate(candidates)
        for j, b in enumerate(candidates)
        if i != j
    }


def copeland(ballots: Sequence[Ballot], k: int, base: ScoredList | None = None) -> ScoredList:
    """Order by pairwise wins minus losses."""
    candidates = _check_ballots(ballots)
    M = margin_matrix(ballots, candidates)
    wins = (M > 0).sum(axis=1) - (M < 0).sum(axis=1)
    scores = {c: float(wins[i]) for i, c in enumerate(candidates)}
    return _top_k(scores, _tie_rank(candidates, base), k)


def _has_cycle(adj: dict) -> bool:
    indeg = {v: 0 for v in adj}
    for v in adj:
        for w in adj[v]:
            indeg[w] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in adj[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    return seen != len(adj)


def lock_pairs(ballots: Sequence[Ballot], base: ScoredList | None = None, check: bool = False) -> dict:
    """Build the locked majority graph of ranked pairs as an adjacency mapping.

    Positive-margin pairs are taken strongest first; a pair is skipped when
    its loser already reaches its winner through locked edges.
    """
    candidates = _check_ballots(ballots)
    tie = _tie_rank(candidates, base)
    M = margin_matrix(ballots, candidates)
    wi, li = np.nonzero(M > 0)
    pairs = sorted(
        zip(wi.tolist(), li.tolist()),
        key=lambda p: (-M[p[0], p[1]], tie[candidates[p[0]]], candidates[p[0]], candidates[p[1]]),
    )
    n = len(candidates)
    # reach[i, j]: j is reachable from i (reflexive)
    reach = np.eye(n, dtype=bool)
    adj = {c: set() for c in candidates}
    for w, l in pairs:
        if reach[l, w]:
            continue
        adj[candidates[w]].add(candidates[l])
        reach |= np.outer(reach[:, w], reach[l, :])
        if check:
            assert not _has_cycle(adj), f"locking {candidates[w]}->{candidates[l]} created a cycle"
    return adj


def ranked_pairs(ballots: Sequence[Ballot], k: int, base: ScoredList | None = None,
                 check: bool = False) -> ScoredList:
    candidates = _check_ballots(ballots)
    if k > len(candidates):
        raise ValueError(f"output size {k} exceeds the {len(candidates)} candidates")
    tie = _tie_rank(candidates, base)
    adj = lock_pairs(ballots, base, check=check)
    indeg = {c: 0 for c in candidates}
    for v in adj:
        for w in adj[v]:
            indeg[w] += 1
    order = []
    ready = {c for c in candidates if indeg[c] == 0}
    while ready:
        # among unconstrained items prefer the recommender's order
        c = min(ready, key=lambda x: tie[x])
        ready.remove(c)
        order.append(c)
        for w in adj[c]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.add(w)
    n = len(order)
    return ScoredList((c, float(n - p)) for p, c in enumerate(order[:k]))


def build_ballots(base: ScoredList, beta: AgentAllocation, agent_lists: Mapping[str, ScoredList],
                  lam: float) -> list[Ballot]:
    """Recommender ballot weighted by lam, agent ballots by (1 - lam) * beta_i; zero weights dropped."""
    _check_candidates(base, agent_lists)
    ballots = []
    if lam > 0:
        ballots.append(Ballot.from_list(RECOMMENDER, lam, base))
    for agent, lst in agent_lists.items():
        w = (1.0 - lam) * beta[agent]
        if w > 0:
            ballots.append(Ballot.from_list(agent, w, lst))
    return ballots


def choose(mechanism: str, base: ScoredList, beta: AgentAllocation,
           agent_lists: Mapping[str, ScoredList], cfg: ChoiceConfig) -> ScoredList:
    if mechanism == "rescore":
        return rescore(base, beta, agent_lists, cfg)
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown choice mechanism {mechanism!r}, expected one of {MECHANISMS}")
    ballots = build_ballots(base, beta, agent_lists, cfg.lam)
    if all(b.voter == RECOMMENDER for b in ballots):
        # only the recommender votes: deliver its list with its own scores
        return base.top(cfg.output_size)
    if mechanism == "borda":
        return borda(ballots, cfg.output_size, base)
    if mechanism == "copeland":
        return copeland(ballots, cfg.output_size, base)
    return ranked_pairs(ballots, cfg.output_size, base)
