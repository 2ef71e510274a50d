"""Ranking metrics against hand-computed values."""

import logging

import numpy as np
import pytest

from taskspace import metrics
from taskspace.errors import ContractViolation
from taskspace.rng import Rng


def test_avg_rank_hand_values():
    truth = {"a": 0.1, "b": 0.9, "c": 0.5}
    assert metrics.avg_rank(["b", "c", "a"], truth) == 1.0
    assert metrics.avg_rank(["c", "a", "b"], truth) == 3.0


def test_avg_rank_requires_permutation():
    with pytest.raises(ContractViolation):
        metrics.avg_rank(["a", "a"], {"a": 1.0, "b": 0.0})


def test_dcg_hand_value():
    # 3/log2(2) + 2/log2(3) + 1/log2(4)
    expected = 3.0 + 2.0 / np.log2(3) + 0.5
    assert metrics.dcg([3, 2, 1]) == pytest.approx(expected, abs=1e-12)


def test_ndcg_perfect_order_is_one():
    rel = {"a": 3.0, "b": 2.0, "c": 1.0}
    assert metrics.ndcg(["a", "b", "c"], rel) == pytest.approx(1.0)


def test_ndcg_reversed_order_hand_value():
    rel = {"a": 3.0, "b": 2.0, "c": 1.0}
    ideal = 3.0 + 2.0 / np.log2(3) + 0.5
    got = (1.0 + 2.0 / np.log2(3) + 1.5)
    assert metrics.ndcg(["c", "b", "a"], rel) == pytest.approx(got / ideal, abs=1e-12)


def test_ndcg_all_zero_relevance_warns_and_returns_one(caplog):
    with caplog.at_level(logging.WARNING):
        out = metrics.ndcg(["a", "b"], {"a": 0.0, "b": 0.0})
    assert out == 1.0
    assert any("all-zero" in rec.message for rec in caplog.records)


def test_ndcg_rejects_negative_relevance():
    with pytest.raises(ContractViolation):
        metrics.ndcg(["a", "b"], {"a": 1.0, "b": -0.1})


def test_performance_rate():
    assert metrics.performance_rate(0.8, [0.5, 1.0, 0.8]) == pytest.approx(0.8)
    assert metrics.performance_rate(1.0, [1.0, 0.2]) == pytest.approx(1.0)
    with pytest.raises(ContractViolation):
        metrics.performance_rate(0.0, [])
    with pytest.raises(ContractViolation):
        metrics.performance_rate(0.0, [-1.0, 0.0])


def test_minmax_relevance():
    rel = metrics.minmax_relevance({"a": 2.0, "b": 6.0, "c": 4.0})
    assert rel == {"a": 0.0, "b": 1.0, "c": 0.5}
    assert metrics.minmax_relevance({"a": 3.0, "b": 3.0}) == {"a": 1.0, "b": 1.0}


def test_random_ranking_is_permutation_and_uniform_rank():
    ids = ["a", "b", "c", "d", "e"]
    out = metrics.random_ranking(ids, Rng(1))
    assert sorted(out) == sorted(ids)
    # expected rank of any fixed candidate under uniform shuffling is (k+1)/2
    k = len(ids)
    ranks = [metrics.random_ranking(ids, Rng(1000 + t)).index("c") + 1 for t in range(2000)]
    assert np.mean(ranks) == pytest.approx((k + 1) / 2, abs=0.1)
