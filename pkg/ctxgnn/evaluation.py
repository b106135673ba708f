"""Temporal split evaluation and the k-hop locality diagnostic."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed

from .config import TrainConfig, eval_threads
from .errors import InvalidConfig, NoEligibleUsers
from .graph import TaskSpec, TemporalHeteroGraph, ground_truth_table
from .metrics import map_at_k, rank_metrics
from .model import ContextGNN
from .sampler import local_item_set, sample_subgraph
from .serving import ScoredRanking, recommend_many

logger = logging.getLogger(__name__)

LOCALITY_DEPTHS = (1, 2, 3)


@dataclass(frozen=True)
class EvalReport:
    split: str
    k: int
    users: int
    map: float
    ndcg: float
    hit_rate: float
    recall: float
    locality: Dict[int, float] = field(default_factory=dict)

    def metrics(self) -> Dict[str, float]:
        values = {
            f"map@{self.k}": self.map,
            f"ndcg@{self.k}": self.ndcg,
            f"hit_rate@{self.k}": self.hit_rate,
            f"recall@{self.k}": self.recall,
        }
        for depth, score in sorted(self.locality.items()):
            values[f"locality_s{depth}"] = score
        return values

    def to_text(self) -> str:
        lines = [f"split={self.split}", f"users={self.users}"]
        lines.extend(f"{name}={value:.6f}" for name, value in self.metrics().items())
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> List[Tuple[str, str, str]]:
        return [(self.split, name, f"{value:.6f}") for name, value in self.metrics().items()]


def locality_score(
    graph: TemporalHeteroGraph,
    task: TaskSpec,
    split: str,
    depth_k: int,
    users: Optional[Iterable[int]] = None,
) -> float:
    """Mean share of each user's future items already inside their k-hop past."""
    if depth_k not in LOCALITY_DEPTHS:
        raise InvalidConfig(f"depth_k must be one of {LOCALITY_DEPTHS}")
    T = task.cutoff(split)
    table = ground_truth_table(graph, T, task, users)
    if not table:
        raise NoEligibleUsers(f"no user has ground truth in the {split} window")
    fanouts = [None] * depth_k
    total = 0.0
    for user, items in table.items():
        local = local_item_set(sample_subgraph(graph, user, T, fanouts))
        total += len(local & items) / len(items)
    return total / len(table)


def _chunks(values: Sequence[int], size: int) -> List[List[int]]:
    return [list(values[i:i + size]) for i in range(0, len(values), size)]


def evaluate_split(
    graph: TemporalHeteroGraph,
    model: ContextGNN,
    task: TaskSpec,
    split: str,
    config: Optional[TrainConfig] = None,
    users: Optional[Iterable[int]] = None,
    with_locality: bool = False,
) -> EvalReport:
    """Rank every eligible user at the split cutoff and aggregate the metrics."""
    config = config or TrainConfig()
    T = task.cutoff(split)
    k = task.eval_k
    table = ground_truth_table(graph, T, task, users)
    if not table:
        raise NoEligibleUsers(f"no user has ground truth in the {split} window")
    eligible = list(table)
    item_matrix = None if model.config.pair_only else model.item_matrix(graph)
    chunks = _chunks(eligible, config.eval_batch_size)
    results = Parallel(n_jobs=eval_threads(), prefer="threads")(
        delayed(recommend_many)(graph, model, chunk, T, k, item_matrix) for chunk in chunks
    )
    rankings: List[ScoredRanking] = [ranking for chunk in results for ranking in chunk]
    ranked = [r.item_ids for r in rankings]
    gt = [table[r.user] for r in rankings]
    ndcg_value, hit_rate, recall = rank_metrics(ranked, gt, k)
    locality = {}
    if with_locality:
        locality = {depth: locality_score(graph, task, split, depth, eligible) for depth in LOCALITY_DEPTHS}
    report = EvalReport(
        split=split,
        k=k,
        users=len(eligible),
        map=map_at_k(ranked, gt, k),
        ndcg=ndcg_value,
        hit_rate=hit_rate,
        recall=recall,
        locality=locality,
    )
    logger.debug("evaluated %s: users=%d map@%d=%.4f", split, report.users, k, report.map)
    return report
