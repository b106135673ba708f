"""Inference-time ranking: exact MIPS over tower scores merged with pair scores."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .errors import InvalidUser
from .graph import TemporalHeteroGraph
from .model import PAIR, TOWER, ContextGNN, UserContext
from .sampler import sample_subgraph
from .tensor_ops import inner_products

CSV_HEADER = ("user_id", "rank", "item_id", "score", "source")


@dataclass(frozen=True)
class ScoredRanking:
    user: int
    seed_time: int
    items: Tuple[Tuple[int, float, str], ...]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def item_ids(self) -> List[int]:
        return [item for item, _, _ in self.items]

    @property
    def scores(self) -> List[float]:
        return [score for _, score, _ in self.items]

    @property
    def sources(self) -> List[str]:
        return [source for _, _, source in self.items]


def _top_order(ids: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` best entries by (score desc, id asc); -inf never ranks."""
    positions = np.flatnonzero(scores > -np.inf)
    if positions.size > k:
        kth = np.partition(-scores[positions], k - 1)[k - 1]
        positions = positions[-scores[positions] <= kth]
    order = np.lexsort((ids[positions], -scores[positions]))
    return positions[order][:k]


def mips_topk(
    item_matrix: np.ndarray,
    query: np.ndarray,
    k: int,
    exclude: Iterable[int] = (),
) -> List[Tuple[int, float]]:
    """Exact maximum-inner-product top-k by full scan; ties go to the smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = inner_products(item_matrix, query)
    keep = np.ones(item_matrix.shape[0], dtype=bool)
    excluded = np.fromiter((int(i) for i in exclude), dtype=np.int64)
    keep[excluded[(excluded >= 0) & (excluded < keep.size)]] = False
    ids = np.flatnonzero(keep)
    order = _top_order(ids, scores[ids], k)
    return [(int(ids[i]), float(scores[ids[i]])) for i in order]


def _merge(model: ContextGNN, ctx: UserContext, item_matrix: Optional[np.ndarray], k: int) -> ScoredRanking:
    ids: List[np.ndarray] = []
    scores: List[np.ndarray] = []
    sources: List[np.ndarray] = []
    if not model.config.tower_only:
        pair_ids, pair_scores = model.pair_scores(ctx)
        ids.append(pair_ids)
        scores.append(pair_scores.astype(np.float64))
        sources.append(np.full(pair_ids.size, PAIR, dtype=object))
    if not model.config.pair_only and item_matrix is not None:
        exclude = () if model.config.tower_only else ctx.local_ids
        tower = mips_topk(item_matrix, ctx.h_v, k, exclude=exclude)
        ids.append(np.array([i for i, _ in tower], dtype=np.int64))
        scores.append(np.array([s for _, s in tower], dtype=np.float64))
        sources.append(np.full(len(tower), TOWER, dtype=object))
    all_ids = np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64)
    all_scores = np.concatenate(scores) if scores else np.zeros(0)
    all_sources = np.concatenate(sources) if sources else np.zeros(0, dtype=object)
    order = _top_order(all_ids, all_scores, k)
    items = tuple((int(all_ids[i]), float(all_scores[i]), str(all_sources[i])) for i in order)
    return ScoredRanking(user=ctx.user, seed_time=ctx.seed_time, items=items)


def _check_users(graph: TemporalHeteroGraph, users: Sequence[int]) -> None:
    for user in users:
        if not 0 <= int(user) < graph.num_users:
            raise InvalidUser(f"user {user} out of range [0, {graph.num_users})")


def recommend_many(
    graph: TemporalHeteroGraph,
    model: ContextGNN,
    users: Sequence[int],
    T: int,
    k: int,
    item_matrix: Optional[np.ndarray] = None,
) -> List[ScoredRanking]:
    """Top-k for each user with one batched GNN pass over all their subgraphs."""
    if not users:
        return []
    _check_users(graph, users)
    subgraphs = [sample_subgraph(graph, int(u), T, model.config.fanouts) for u in users]
    contexts = model.embed_many(subgraphs, graph)
    if item_matrix is None and not model.config.pair_only:
        item_matrix = model.item_matrix(graph)
    return [_merge(model, ctx, item_matrix, k) for ctx in contexts]


def recommend_topk(graph: TemporalHeteroGraph, model: ContextGNN, user: int, T: int, k: int) -> ScoredRanking:
    return recommend_many(graph, model, [user], T, k)[0]


def exhaustive_ranking(graph: TemporalHeteroGraph, model: ContextGNN, user: int, T: int, k: int) -> ScoredRanking:
    """Score every item with the merge rule and sort; reference path for recommend_topk."""
    _check_users(graph, [user])
    ctx = model.embed(sample_subgraph(graph, int(user), T, model.config.fanouts), graph)
    matrix = None if model.config.pair_only else model.item_matrix(graph)
    scores, is_pair = model.score_all(ctx, graph.num_items, matrix)
    ids = np.arange(graph.num_items)
    order = _top_order(ids, scores, k)
    items = tuple((int(i), float(scores[i]), PAIR if is_pair[i] else TOWER) for i in order)
    return ScoredRanking(user=int(user), seed_time=int(T), items=items)


def rankings_to_csv(rankings: Iterable[ScoredRanking], handle: TextIO) -> int:
    """Write ``user_id,rank,item_id,score,source`` rows; returns the row count."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    count = 0
    for ranking in rankings:
        for rank, (item, score, source) in enumerate(ranking.items, start=1):
            writer.writerow((ranking.user, rank, item, f"{score:.6f}", source))
            count += 1
    return count
