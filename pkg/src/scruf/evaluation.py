"""Post-hoc metrics over a completed run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection, Mapping, Sequence

import numpy as np

from .agents import AgentSpec
from .model import ScoredList, StepRecord


@dataclass
class RunMetrics:
    ndcg: float
    fairness: dict[str, float]
    l_half: float
    regret: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def avg_fairness(self) -> float:
        return float(np.mean(list(self.fairness.values()))) if self.fairness else 0.0

    def final_regret(self) -> dict[str, float]:
        return {a: float(s[-1]) if len(s) else 0.0 for a, s in self.regret.items()}


def _dcg(gains: Sequence[float]) -> float:
    return sum(g / math.log2(p + 2) for p, g in enumerate(gains))


def ndcg_at_k(output: ScoredList, reference: ScoredList, k: int) -> float:
    """Graded nDCG of ``output`` using the reference list's scores as relevance.

    Negative reference scores count as zero relevance.  When the reference
    offers no positive relevance at all, nothing can be lost and 1.0 is
    returned.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if not len(reference):
        raise ValueError("reference list is empty")
    gains = [max(reference.score_of(i, 0.0), 0.0) for i, _ in output.entries[:k]]
    ideal = sorted((max(s, 0.0) for s in reference.scores), reverse=True)[:k]
    idcg = _dcg(ideal)
    if idcg <= 0:
        return 1.0
    return _dcg(gains) / idcg


def ndcg_binary(output: ScoredList, relevant: Collection[str], k: int) -> float:
    """nDCG with held-out items as binary relevance."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    gains = [1.0 if i in relevant else 0.0 for i, _ in output.entries[:k]]
    idcg = _dcg([1.0] * min(k, len(relevant)))
    if idcg <= 0:
        return 0.0
    return _dcg(gains) / idcg


def protected_share(record: StepRecord, protected) -> float:
    k = len(record.output_list)
    if not k:
        return 0.0
    return sum(1 for i, _ in record.output_list if i in protected) / k


def global_fairness(run: Sequence[StepRecord], agent: AgentSpec, protected) -> float:
    """The agent's metric over the whole run, without the clamp at 1.

    Proportional exposure: mean protected share divided by the target.
    List presence: fraction of lists holding a protected item.
    """
    if not run:
        raise ValueError("global fairness needs a non-empty run")
    if agent.metric_kind == "list_presence":
        return sum(1 for r in run if protected_share(r, protected) > 0) / len(run)
    mean = sum(protected_share(r, protected) for r in run) / len(run)
    return mean / agent.target


def l_half(values: Sequence[float]) -> float:
    """Square of the mean square root, i.e. (sum sqrt(m_i))^2 / n^2.

    Equals the common value when all inputs agree and drops below the
    arithmetic mean when they are spread out.
    """
    vals = list(values)
    if not vals:
        raise ValueError("l_half needs at least one value")
    if any(v < 0 for v in vals):
        raise ValueError(f"l_half is undefined for negative values: {vals}")
    n = len(vals)
    return sum(math.sqrt(v) for v in vals) ** 2 / n**2


def fairness_regret(in_loop: Sequence[float]) -> np.ndarray:
    return np.cumsum(1.0 - np.asarray(in_loop, dtype=float))


def evaluate(records: Sequence[StepRecord], agents: Sequence[AgentSpec], protected: Mapping[str, frozenset],
             k: int, relevant: Mapping[str, Collection[str]] | None = None) -> RunMetrics:
    """Compute accuracy, global fairness, L1/2 and regret series for a run.

    With ``relevant`` (user id to held-out items) accuracy uses binary
    relevance; otherwise the base list's scores are the graded relevance.
    """
    if relevant is None:
        scores = [ndcg_at_k(r.output_list, r.base_list, k) for r in records]
    else:
        scores = [ndcg_binary(r.output_list, relevant.get(r.user_id, ()), k) for r in records]
    ndcg = float(np.mean(scores)) if scores else 0.0
    fair = {a.name: global_fairness(records, a, protected[a.name]) for a in agents} if records else {}
    regret = {a.name: fairness_regret([r.fairness[a.name] for r in records]) for a in agents}
    lh = l_half(list(fair.values())) if fair else 0.0
    return RunMetrics(ndcg=ndcg, fairness=fair, l_half=lh, regret=regret)
