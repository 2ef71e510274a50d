"""Ranking-quality metrics: average rank, NDCG, performance rate."""

from __future__ import annotations

import logging

import numpy as np

from .errors import ContractViolation
from .rng import Rng

log = logging.getLogger(__name__)


def _check_permutation(predicted, keys) -> None:
    if sorted(predicted) != sorted(keys):
        raise ContractViolation("predicted ranking is not a permutation of the candidates")


def avg_rank(predicted: list, true_scores: dict) -> float:
    """1-based position of the truly best candidate in the predicted order."""
    _check_permutation(predicted, list(true_scores))
    best = max(sorted(true_scores), key=lambda k: true_scores[k])
    return float(predicted.index(best) + 1)


def dcg(relevances) -> float:
    rel = np.asarray(relevances, dtype=np.float64)
    positions = np.arange(1, rel.size + 1)
    return float((rel / np.log2(positions + 1)).sum())


def ndcg(predicted: list, relevance: dict) -> float:
    """DCG of the predicted order over DCG of the ideal order, in [0, 1].

    All-zero relevance is degenerate (every order is ideal): returns 1.0 with
    a logged warning.
    """
    _check_permutation(predicted, list(relevance))
    if any(v < 0 for v in relevance.values()):
        raise ContractViolation("relevance values must be non-negative")
    ideal = sorted(relevance.values(), reverse=True)
    idcg = dcg(ideal)
    if idcg == 0.0:
        log.warning("ndcg: all-zero relevance, defining result as 1.0")
        return 1.0
    return dcg([relevance[k] for k in predicted]) / idcg


def performance_rate(selected: float, all_scores: list) -> float:
    """Selected candidate's score over the best candidate's score."""
    if not all_scores:
        raise ContractViolation("all_scores must be non-empty")
    best = max(all_scores)
    if best <= 0:
        raise ContractViolation("performance rate undefined: max score <= 0")
    return selected / best


def minmax_relevance(scores: dict) -> dict:
    """Per-target min-max mapping: best score -> 1, worst -> 0.

    All-equal scores map to all-1 (handled downstream by the ndcg degenerate
    rule never firing, since 1 > 0).
    """
    vals = list(scores.values())
    lo, hi = min(vals), max(vals)
    if hi == lo:
        return {k: 1.0 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def random_ranking(ids: list, rng: Rng) -> list:
    perm = rng.permutation(len(ids))
    return [sorted(ids)[i] for i in perm]
