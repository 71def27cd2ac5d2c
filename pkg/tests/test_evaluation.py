import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import record
from scruf.agents import AgentSpec
from scruf.evaluation import (
    evaluate,
    fairness_regret,
    global_fairness,
    l_half,
    ndcg_at_k,
    ndcg_binary,
)
from scruf.model import ScoredList

BASE = ScoredList([("v6", 0.6), ("v4", 0.5), ("v5", 0.3), ("v3", 0.3), ("v1", 0.0), ("v2", 0.0)])


def dcg(gains):
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


class TestNdcg:
    def test_identity(self):
        assert ndcg_at_k(BASE.top(3), BASE, 3) == 1.0

    def test_worked_example_lists(self):
        u1 = ScoredList([("v5", 0.475), ("v6", 0.45), ("v4", 0.375)])
        u2 = ScoredList([("v6", 0.45), ("v4", 0.375), ("v1", 0.25)])
        ideal = dcg([0.6, 0.5, 0.3])
        assert ndcg_at_k(u1, BASE, 3) == pytest.approx(dcg([0.3, 0.6, 0.5]) / ideal)
        assert ndcg_at_k(u2, BASE, 3) == pytest.approx(dcg([0.6, 0.5, 0.0]) / ideal)
        mean = (ndcg_at_k(u1, BASE, 3) + ndcg_at_k(u2, BASE, 3) + 1.0) / 3
        assert mean == pytest.approx(0.9102, abs=1e-4)

    def test_negative_relevance_clipped(self):
        ref = ScoredList([("a", 1.0), ("b", -2.0), ("c", -3.0)])
        out = ScoredList([("b", 1.0), ("a", 0.5)])
        assert ndcg_at_k(out, ref, 2) == pytest.approx(dcg([0, 1]) / dcg([1, 0]))

    def test_no_positive_relevance(self):
        ref = ScoredList([("a", 0.0), ("b", -1.0)])
        assert ndcg_at_k(ScoredList([("b", 1.0)]), ref, 1) == 1.0

    def test_binary(self):
        out = ScoredList([("a", 3.0), ("b", 2.0), ("c", 1.0)])
        assert ndcg_binary(out, {"b"}, 3) == pytest.approx(1 / math.log2(3))
        assert ndcg_binary(out, set(), 3) == 0.0

    @given(st.permutations(range(8)), st.integers(1, 8))
    def test_bounded(self, perm, k):
        ref = ScoredList((f"i{j}", float(8 - j)) for j in range(8))
        out = ScoredList((f"i{j}", float(8 - n)) for n, j in enumerate(perm))
        assert 0.0 <= ndcg_at_k(out, ref, k) <= 1.0 + 1e-12


class TestLHalf:
    def test_table_values(self):
        assert l_half([0.5116, 0.1103]) == pytest.approx(0.2742, abs=2e-4)
        assert l_half([1.0077, 0.9991]) == pytest.approx(1.0034, abs=2e-4)

    def test_equal_values(self):
        assert l_half([0.4, 0.4, 0.4]) == pytest.approx(0.4)

    def test_negative(self):
        with pytest.raises(ValueError):
            l_half([0.5, -0.1])

    @given(st.lists(st.floats(0, 2), min_size=1, max_size=6))
    def test_between_min_and_mean(self, vals):
        v = l_half(vals)
        assert min(vals) - 1e-12 <= v <= np.mean(vals) + 1e-12


class TestRegret:
    def test_cumsum(self):
        assert list(fairness_regret([1.0, 0.5, 0.0, 0.5])) == [0.0, 0.5, 1.5, 2.0]

    @given(st.lists(st.floats(0, 1), max_size=30))
    def test_non_decreasing(self, m):
        g = fairness_regret(m)
        assert np.all(np.diff(g) >= -1e-12)


class TestGlobalFairness:
    AGENT = AgentSpec("a", "f", frozenset({"1"}), "proportional_exposure", 0.2)

    def test_unclamped(self):
        run = [record(0, ["p", "x"]), record(1, ["p", "q"]), record(2, ["x", "y"])]
        # shares 0.5, 1.0, 0.0 average 0.5; over 0.2 gives 2.5
        assert global_fairness(run, self.AGENT, {"p", "q"}) == pytest.approx(2.5)

    def test_below_target(self):
        run = [record(t, ["p"] + [f"x{j}" for j in range(9)]) for t in range(4)] + [record(4, ["z"])]
        # shares 0.1 x4 and 0 average 0.08
        assert global_fairness(run, self.AGENT, {"p"}) == pytest.approx(0.4)

    def test_list_presence(self):
        agent = AgentSpec("l", "f", frozenset({"1"}), "list_presence", 1.0)
        run = [record(0, ["p", "x"]), record(1, ["x", "y"])]
        assert global_fairness(run, agent, {"p"}) == 0.5


class TestEvaluate:
    def test_run_metrics(self):
        agent = AgentSpec("a", "f", frozenset({"1"}), "proportional_exposure", 0.5)
        run = [record(0, ["p", "x"], fairness={"a": 0.0}), record(1, ["x", "y"], fairness={"a": 1.0})]
        m = evaluate(run, [agent], {"a": frozenset({"p"})}, 2)
        assert m.ndcg == 1.0
        assert m.fairness == {"a": pytest.approx(0.5)}
        assert m.l_half == pytest.approx(0.5)
        assert m.final_regret() == {"a": 1.0}
        assert m.avg_fairness == pytest.approx(0.5)
