"""Ablation and step-timing experiments shared by the CLI and scripts."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .config import TrainConfig
from .errors import NoEligibleUsers
from .evaluation import evaluate_split
from .graph import TaskSpec, TemporalHeteroGraph
from .trainer import Trainer, training_rows

logger = logging.getLogger(__name__)

VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {"pair_only": False, "tower_only": False},
    "pair_only": {"pair_only": True, "tower_only": False},
    "tower_only": {"pair_only": False, "tower_only": True},
}


@dataclass(frozen=True)
class VariantResult:
    variant: str
    seed: int
    group: str
    users: int
    map: float


def compare_variants(
    graph: TemporalHeteroGraph,
    task: TaskSpec,
    config: TrainConfig,
    seeds: Sequence[int],
    groups: Optional[Mapping[str, Sequence[int]]] = None,
    split: str = "test",
) -> List[VariantResult]:
    """Train every variant per seed and report MAP overall and per user group."""
    results: List[VariantResult] = []
    for seed in seeds:
        for name, flags in VARIANTS.items():
            variant_config = config.with_overrides(seed=seed, **flags)
            trainer = Trainer(graph, task, variant_config)
            trainer.fit()
            subsets = {"all": None, **dict(groups or {})}
            for group, users in subsets.items():
                try:
                    report = evaluate_split(graph, trainer.model, task, split, variant_config, users=users)
                except NoEligibleUsers:
                    logger.warning("no eligible %s users for %s (seed %d)", group, name, seed)
                    continue
                results.append(VariantResult(name, seed, group, report.users, report.map))
                logger.info("%s seed=%d group=%s map=%.4f", name, seed, group, report.map)
    return results


def time_train_steps(
    graph: TemporalHeteroGraph,
    task: TaskSpec,
    config: TrainConfig,
    class_budgets: Sequence[int],
    steps: int = 3,
) -> List[Dict[str, float]]:
    """Seconds per training step and GNN seeds per step for each class budget."""
    rows = training_rows(graph, task)
    out: List[Dict[str, float]] = []
    for budget in class_budgets:
        trainer = Trainer(graph, task, config.with_overrides(classes_C=budget))
        batch = trainer.batches(rows)[0]
        trainer.train_step(batch)
        seeds_before = trainer.model.forward_seeds
        start = time.perf_counter()
        for _ in range(steps):
            trainer.train_step(batch)
        seconds = (time.perf_counter() - start) / steps
        out.append(
            {
                "classes_C": float(min(budget, graph.num_items)),
                "seconds_per_step": seconds,
                "gnn_seeds_per_step": (trainer.model.forward_seeds - seeds_before) / steps,
                "distinct_seeds": float(len({(r.user, r.seed_time) for r in batch})),
            }
        )
    return out


def summarize(results: Sequence[VariantResult]) -> Dict[str, Dict[str, float]]:
    """Mean MAP per (variant, group) across seeds."""
    table: Dict[str, Dict[str, List[float]]] = {}
    for result in results:
        table.setdefault(result.variant, {}).setdefault(result.group, []).append(result.map)
    return {v: {g: float(np.mean(values)) for g, values in groups.items()} for v, groups in table.items()}
