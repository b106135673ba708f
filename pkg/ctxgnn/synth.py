"""Seeded synthetic user-item interaction data with repeaters and explorers."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .data_loader import EDGE_HEADER, manifest_dict, write_csv
from .errors import InvalidConfig
from .graph import EdgeType, GraphSchema, TaskSpec, TemporalHeteroGraph, build_graph, edge_key

logger = logging.getLogger(__name__)

START_TIME = 1_600_000_000
STEP_SECONDS = 3600
USER_TYPE = "user"
ITEM_TYPE = "item"
INTERACTS: EdgeType = (USER_TYPE, "interacts", ITEM_TYPE)
REPEATER = "repeater"
EXPLORER = "explorer"


@dataclass(frozen=True)
class SynthConfig:
    num_users: int = 200
    num_items: int = 100
    num_train_interactions: int = 2000
    repeat_prob: float = 0.5
    community_count: int = 5
    community_affinity: float = 0.7
    explorer_fraction: float = 0.0
    eval_window_interactions: Optional[int] = None
    eval_k: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.num_users, self.num_items, self.num_train_interactions, self.community_count) < 1:
            raise InvalidConfig("user, item, interaction and community counts must be >= 1")
        for name in ("repeat_prob", "community_affinity", "explorer_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if self.num_train_interactions < self.num_users:
            raise InvalidConfig("num_train_interactions must cover one warm-up interaction per user")
        if self.eval_window_interactions is not None and self.eval_window_interactions < 1:
            raise InvalidConfig("eval_window_interactions must be >= 1")
        if self.eval_k < 1:
            raise InvalidConfig("eval_k must be >= 1")

    @property
    def window(self) -> int:
        if self.eval_window_interactions is not None:
            return self.eval_window_interactions
        return max(1, self.num_train_interactions // 10)


@dataclass(frozen=True)
class SynthData:
    graph: TemporalHeteroGraph
    task: TaskSpec
    node_tables: Dict[str, List[Dict[str, str]]]
    edge_tables: Dict[EdgeType, List[Dict[str, str]]]
    user_groups: Dict[int, str]
    repeats: int

    def users_in(self, group: str) -> List[int]:
        return [user for user, label in sorted(self.user_groups.items()) if label == group]


class _Population:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.rng = rng
        self.user_community = rng.integers(cfg.community_count, size=cfg.num_users)
        self.item_community = np.arange(cfg.num_items) % cfg.community_count
        self.community_items = [np.flatnonzero(self.item_community == c).tolist() for c in range(cfg.community_count)]
        explorers = set(rng.permutation(cfg.num_users)[: int(round(cfg.explorer_fraction * cfg.num_users))].tolist())
        self.groups = {u: EXPLORER if u in explorers else REPEATER for u in range(cfg.num_users)}
        self.history: List[List[int]] = [[] for _ in range(cfg.num_users)]
        self.seen: List[Set[int]] = [set() for _ in range(cfg.num_users)]

    def _novel(self, user: int) -> Optional[int]:
        seen = self.seen[user]
        if len(seen) >= self.cfg.num_items:
            return None
        if self.rng.random() < self.cfg.community_affinity:
            pool = [i for i in self.community_items[self.user_community[user]] if i not in seen]
            if pool:
                return int(pool[self.rng.integers(len(pool))])
        pool = [i for i in range(self.cfg.num_items) if i not in seen]
        return int(pool[self.rng.integers(len(pool))])

    def draw(self, user: int, warm_up: bool) -> Tuple[int, bool]:
        """Next item of ``user`` and whether it repeats a past item."""
        repeat_prob = 0.0 if self.groups[user] == EXPLORER else self.cfg.repeat_prob
        item = None
        if warm_up or self.rng.random() >= repeat_prob:
            item = self._novel(user)
        repeated = item is None
        if repeated:
            past = self.history[user]
            item = past[self.rng.integers(len(past))]
        self.history[user].append(item)
        self.seen[user].add(item)
        return item, repeated


def generate_synthetic(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    population = _Population(cfg, rng)
    window = cfg.window
    total = cfg.num_train_interactions + 2 * window

    edges: List[Dict[str, str]] = []
    repeats = 0
    warm_up = rng.permutation(cfg.num_users)
    for step in range(total):
        if step < cfg.num_users:
            user, first = int(warm_up[step]), True
        else:
            user, first = int(rng.integers(cfg.num_users)), False
        item, repeated = population.draw(user, warm_up=first)
        repeats += int(repeated)
        stamp = START_TIME + step * STEP_SECONDS
        edges.append({"src_id": str(user), "dst_id": str(item), "timestamp": str(stamp)})

    users = [
        {"id": str(u), "age": str(int(rng.integers(18, 70))), "region": f"r{population.user_community[u]}"}
        for u in range(cfg.num_users)
    ]
    items = [
        {"id": str(i), "price": f"{rng.uniform(1.0, 100.0):.2f}", "category": f"c{population.item_community[i]}"}
        for i in range(cfg.num_items)
    ]
    val_cutoff = START_TIME + (cfg.num_train_interactions - 1) * STEP_SECONDS
    interval = window * STEP_SECONDS
    task = TaskSpec(
        target_edge_type=INTERACTS,
        interval=interval,
        val_cutoff=val_cutoff,
        test_cutoff=val_cutoff + interval,
        eval_k=cfg.eval_k,
    )
    schema = GraphSchema(node_types=(USER_TYPE, ITEM_TYPE), edge_types=(INTERACTS,), user_type=USER_TYPE, item_type=ITEM_TYPE)
    node_tables = {USER_TYPE: users, ITEM_TYPE: items}
    edge_tables = {INTERACTS: edges}
    graph = build_graph(node_tables, edge_tables, schema)
    logger.debug("synthesized %d interactions (%d repeats) for %d users", total, repeats, cfg.num_users)
    return SynthData(
        graph=graph,
        task=task,
        node_tables=node_tables,
        edge_tables=edge_tables,
        user_groups=population.groups,
        repeats=repeats,
    )


def write_synthetic(data: SynthData, out_dir: Path) -> Path:
    """Write node/edge CSV tables plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    users = data.node_tables[USER_TYPE]
    items = data.node_tables[ITEM_TYPE]
    write_csv(out_dir / f"{USER_TYPE}.csv", ("id", "age", "region"), ([r["id"], r["age"], r["region"]] for r in users))
    write_csv(out_dir / f"{ITEM_TYPE}.csv", ("id", "price", "category"), ([r["id"], r["price"], r["category"]] for r in items))
    write_csv(
        out_dir / f"{edge_key(INTERACTS)}.csv",
        EDGE_HEADER,
        ([r["src_id"], r["dst_id"], r["timestamp"]] for r in data.edge_tables[INTERACTS]),
    )
    write_csv(out_dir / "groups.csv", ("user_id", "group"), sorted(data.user_groups.items()))
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(manifest_dict(data.graph.schema, data.task), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
