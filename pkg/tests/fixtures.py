"""Small graphs shared by the test modules."""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from ctxgnn.graph import EdgeType, GraphSchema, TaskSpec, TemporalHeteroGraph, build_graph
from ctxgnn.model import ContextGNN, ModelConfig

INTERACTS: EdgeType = ("user", "interacts", "item")
SOLD_BY: EdgeType = ("item", "sold_by", "shop")
FOLLOWS: EdgeType = ("user", "follows", "user")

USER_ITEM = GraphSchema(node_types=("user", "item"), edge_types=(INTERACTS,), user_type="user", item_type="item")
HETERO = GraphSchema(
    node_types=("user", "item", "shop"),
    edge_types=(INTERACTS, SOLD_BY, FOLLOWS),
    user_type="user",
    item_type="item",
)


def edge_rows(triples: Sequence[Tuple[int, int, int]]) -> List[Dict[str, str]]:
    return [{"src_id": str(s), "dst_id": str(d), "timestamp": str(t)} for s, d, t in triples]


def plain_nodes(count: int, **columns: Sequence[object]) -> List[Dict[str, str]]:
    rows = []
    for i in range(count):
        row = {"id": str(i)}
        for name, values in columns.items():
            row[name] = str(values[i])
        rows.append(row)
    return rows


def user_item_graph(
    num_users: int,
    num_items: int,
    interactions: Sequence[Tuple[int, int, int]],
) -> TemporalHeteroGraph:
    users = plain_nodes(num_users, age=[20 + 3 * i for i in range(num_users)])
    items = plain_nodes(num_items, price=[1.5 * (i + 1) for i in range(num_items)], color=["red", "blue"] * num_items)
    return build_graph({"user": users, "item": items}, {INTERACTS: edge_rows(interactions)}, USER_ITEM)


def toy_graph() -> Tuple[TemporalHeteroGraph, TaskSpec]:
    """Five users, eight items; history up to t=10, validation (10, 20], test (20, 30]."""
    history = [
        (0, 0, 1), (0, 1, 2), (1, 1, 3), (1, 2, 4), (2, 3, 5),
        (3, 4, 6), (4, 5, 7), (2, 6, 8), (3, 0, 9), (4, 7, 10),
    ]
    future = [
        (0, 0, 12), (0, 2, 14), (1, 1, 13), (2, 3, 15), (3, 4, 16), (4, 6, 18),
        (0, 1, 22), (1, 5, 24), (2, 6, 25), (3, 0, 26), (4, 7, 28),
    ]
    graph = user_item_graph(5, 8, history + future)
    task = TaskSpec(target_edge_type=INTERACTS, interval=10, val_cutoff=10, test_cutoff=20, eval_k=10)
    return graph, task


def random_hetero_graph(rng: np.random.Generator, max_nodes: int = 50) -> TemporalHeteroGraph:
    """Random three-type graph with at most ``max_nodes`` nodes and repeated timestamps."""
    counts = {"user": int(rng.integers(2, 15)), "item": int(rng.integers(2, 15)), "shop": int(rng.integers(1, 8))}
    while sum(counts.values()) > max_nodes:
        counts[max(counts, key=counts.get)] -= 1
    nodes = {
        "user": plain_nodes(counts["user"], age=rng.integers(18, 60, size=counts["user"])),
        "item": plain_nodes(counts["item"], price=np.round(rng.uniform(1, 50, size=counts["item"]), 2)),
        "shop": plain_nodes(counts["shop"], kind=rng.choice(["a", "b"], size=counts["shop"])),
    }

    def random_edges(src_type: str, dst_type: str, count: int) -> List[Tuple[int, int, int]]:
        return [
            (int(rng.integers(counts[src_type])), int(rng.integers(counts[dst_type])), int(rng.integers(0, 30)))
            for _ in range(count)
        ]

    edges = {
        INTERACTS: edge_rows(random_edges("user", "item", int(rng.integers(0, 40)))),
        SOLD_BY: edge_rows(random_edges("item", "shop", int(rng.integers(0, 20)))),
        FOLLOWS: edge_rows(random_edges("user", "user", int(rng.integers(0, 15)))),
    }
    return build_graph(nodes, edges, HETERO)


def make_model(
    graph: TemporalHeteroGraph,
    seed: int = 0,
    hidden_dim: int = 4,
    fanouts: Sequence[Optional[int]] = (5, 5),
    **overrides: object,
) -> ContextGNN:
    config = ModelConfig(
        hidden_dim=hidden_dim,
        num_layers=len(fanouts),
        fusion_hidden=overrides.pop("fusion_hidden", 3),  # type: ignore[arg-type]
        fanouts=tuple(fanouts),  # type: ignore[arg-type]
        **overrides,  # type: ignore[arg-type]
    )
    return ContextGNN.initialize(graph, config, seed)
