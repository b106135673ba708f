"""Top-k ranking metrics with binary relevance."""
from __future__ import annotations

from typing import AbstractSet, Sequence, Tuple

import numpy as np

from .errors import EmptyGroundTruth


def _hits(ranking: Sequence[int], ground_truth: AbstractSet[int], k: int) -> np.ndarray:
    if not ground_truth:
        raise EmptyGroundTruth("users without ground truth cannot be evaluated")
    return np.array([1.0 if item in ground_truth else 0.0 for item in list(ranking)[:k]])


def _check(rankings: Sequence[Sequence[int]], gt: Sequence[AbstractSet[int]], k: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(rankings) != len(gt):
        raise ValueError(f"{len(rankings)} rankings but {len(gt)} ground-truth sets")
    if not gt:
        raise EmptyGroundTruth("no users to evaluate")


def average_precision(ranking: Sequence[int], ground_truth: AbstractSet[int], k: int) -> float:
    hits = _hits(ranking, ground_truth, k)
    if not hits.size:
        return 0.0
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision * hits) / min(len(ground_truth), k))


def map_at_k(rankings: Sequence[Sequence[int]], gt: Sequence[AbstractSet[int]], k: int) -> float:
    _check(rankings, gt, k)
    return float(np.mean([average_precision(r, g, k) for r, g in zip(rankings, gt)]))


def ndcg(ranking: Sequence[int], ground_truth: AbstractSet[int], k: int) -> float:
    hits = _hits(ranking, ground_truth, k)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    ideal = discounts[: min(len(ground_truth), k)].sum()
    return float(np.sum(hits * discounts[: hits.size]) / ideal)


def rank_metrics(
    rankings: Sequence[Sequence[int]],
    gt: Sequence[AbstractSet[int]],
    k: int,
) -> Tuple[float, float, float]:
    """(NDCG@k, HitRate@k, Recall@k) averaged over users."""
    _check(rankings, gt, k)
    ndcgs, hit_rates, recalls = [], [], []
    for ranking, ground_truth in zip(rankings, gt):
        hits = _hits(ranking, ground_truth, k)
        ndcgs.append(ndcg(ranking, ground_truth, k))
        hit_rates.append(1.0 if hits.sum() > 0 else 0.0)
        recalls.append(hits.sum() / len(ground_truth))
    return float(np.mean(ndcgs)), float(np.mean(hit_rates)), float(np.mean(recalls))
