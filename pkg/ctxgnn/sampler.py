"""Temporal k-hop subgraph extraction around a seed user."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import InvalidConfig, InvalidSeed
from .graph import EdgeType, TemporalHeteroGraph, is_reverse, recent_walks, reverse_edge_type

Fanouts = Sequence[Optional[int]]


@dataclass(frozen=True)
class LocalEdges:
    src: np.ndarray
    dst: np.ndarray
    time: np.ndarray

    @classmethod
    def empty(cls) -> "LocalEdges":
        return cls(*(np.zeros(0, dtype=np.int64) for _ in range(3)))

    def __len__(self) -> int:
        return int(self.src.shape[0])

    def reversed(self) -> "LocalEdges":
        return LocalEdges(src=self.dst, dst=self.src, time=self.time)


@dataclass(frozen=True)
class Subgraph:
    """Local view of the k-hop neighborhood of one seed user at one seed time.

    ``nodes[t][i]`` is the global id of local node ``i`` of type ``t``; the
    seed user is always local user 0.
    """

    user_type: str
    item_type: str
    seed_local: int
    seed_time: int
    depth: int
    nodes: Dict[str, np.ndarray]
    hops: Dict[str, np.ndarray]
    edges: Dict[EdgeType, LocalEdges]

    @property
    def seed_user(self) -> int:
        return int(self.nodes[self.user_type][self.seed_local])

    def num_nodes(self, node_type: str) -> int:
        return int(self.nodes[node_type].shape[0])

    def edge_count(self) -> int:
        return sum(len(e) for e in self.edges.values())


def sample_subgraph(
    graph: TemporalHeteroGraph,
    seed_user: int,
    T: int,
    fanouts: Fanouts,
) -> Subgraph:
    if len(fanouts) < 1:
        raise InvalidConfig("at least one hop fanout is required")
    if not 0 <= int(seed_user) < graph.num_users:
        raise InvalidSeed(f"seed user {seed_user} out of range [0, {graph.num_users})")

    order: Dict[str, List[int]] = {t: [] for t in graph.node_types}
    hop_of: Dict[str, List[int]] = {t: [] for t in graph.node_types}
    local: Dict[str, Dict[int, int]] = {t: {} for t in graph.node_types}
    seen: Dict[EdgeType, Set[int]] = {et: set() for et in graph.edge_types}
    found: Dict[EdgeType, List[Tuple[int, int, int]]] = {et: [] for et in graph.edge_types}

    def visit(node_type: str, node: int, hop: int) -> bool:
        if node in local[node_type]:
            return False
        local[node_type][node] = len(order[node_type])
        order[node_type].append(node)
        hop_of[node_type].append(hop)
        return True

    visit(graph.user_type, int(seed_user), 0)
    frontier: List[Tuple[str, int]] = [(graph.user_type, int(seed_user))]
    for hop, fanout in enumerate(fanouts, start=1):
        next_frontier: List[Tuple[str, int]] = []
        for node_type, node in frontier:
            for edge_type, directions in graph.incident(node_type):
                store = graph.edges[edge_type]
                for position, walk_back in recent_walks(store, node, T, fanout, directions):
                    other_type = edge_type[0] if walk_back else edge_type[2]
                    other = int(store.src[position] if walk_back else store.dst[position])
                    if visit(other_type, other, hop):
                        next_frontier.append((other_type, other))
                    if position not in seen[edge_type]:
                        seen[edge_type].add(position)
                        found[edge_type].append(
                            (
                                local[edge_type[0]][int(store.src[position])],
                                local[edge_type[2]][int(store.dst[position])],
                                int(store.time[position]),
                            )
                        )
        frontier = next_frontier

    edges: Dict[EdgeType, LocalEdges] = {}
    for edge_type, triples in found.items():
        if triples:
            src, dst, time = (np.array(col, dtype=np.int64) for col in zip(*triples))
            edges[edge_type] = LocalEdges(src=src, dst=dst, time=time)
        else:
            edges[edge_type] = LocalEdges.empty()
    return Subgraph(
        user_type=graph.user_type,
        item_type=graph.item_type,
        seed_local=0,
        seed_time=int(T),
        depth=len(fanouts),
        nodes={t: np.array(ids, dtype=np.int64) for t, ids in order.items()},
        hops={t: np.array(h, dtype=np.int64) for t, h in hop_of.items()},
        edges=edges,
    )


def bidirectionalize(sub: Subgraph) -> Subgraph:
    """Add a ``rev_*`` edge type mirroring every canonical edge type.

    Reverse types already present are regenerated from their canonical type,
    so applying this twice leaves the edge multiset unchanged.
    """
    edges: Dict[EdgeType, LocalEdges] = {}
    for edge_type, local_edges in sub.edges.items():
        if is_reverse(edge_type):
            continue
        edges[edge_type] = local_edges
        edges[reverse_edge_type(edge_type)] = local_edges.reversed()
    return replace(sub, edges=edges)


def local_item_set(sub: Subgraph) -> Set[int]:
    return {int(g) for g in sub.nodes[sub.item_type]}


@dataclass(frozen=True)
class SubgraphBatch:
    """Disjoint union of bidirectional subgraphs, one seed per member."""

    user_type: str
    item_type: str
    depth: int
    nodes: Dict[str, np.ndarray]
    owner: Dict[str, np.ndarray]
    edges: Dict[EdgeType, LocalEdges]
    seeds: np.ndarray
    seed_users: np.ndarray
    seed_times: np.ndarray

    @property
    def size(self) -> int:
        return int(self.seeds.shape[0])

    def num_nodes(self, node_type: str) -> int:
        return int(self.nodes[node_type].shape[0])


def collate(subgraphs: Sequence[Subgraph]) -> SubgraphBatch:
    if not subgraphs:
        raise ValueError("cannot collate an empty list of subgraphs")
    first = subgraphs[0]
    if any(sub.depth != first.depth for sub in subgraphs):
        raise ValueError("all subgraphs of a batch must share the same depth")
    parts = [bidirectionalize(sub) for sub in subgraphs]
    node_types = list(first.nodes)
    edge_types = list(parts[0].edges)

    offsets = {t: np.cumsum([0] + [p.num_nodes(t) for p in parts])[:-1] for t in node_types}
    nodes = {t: np.concatenate([p.nodes[t] for p in parts]).astype(np.int64) for t in node_types}
    owner = {
        t: np.concatenate([np.full(p.num_nodes(t), i, dtype=np.int64) for i, p in enumerate(parts)])
        for t in node_types
    }
    edges: Dict[EdgeType, LocalEdges] = {}
    for edge_type in edge_types:
        src_type, _, dst_type = edge_type
        edges[edge_type] = LocalEdges(
            src=np.concatenate([p.edges[edge_type].src + offsets[src_type][i] for i, p in enumerate(parts)]),
            dst=np.concatenate([p.edges[edge_type].dst + offsets[dst_type][i] for i, p in enumerate(parts)]),
            time=np.concatenate([p.edges[edge_type].time for p in parts]),
        )
    user_offsets = offsets[first.user_type]
    return SubgraphBatch(
        user_type=first.user_type,
        item_type=first.item_type,
        depth=first.depth,
        nodes=nodes,
        owner=owner,
        edges=edges,
        seeds=np.array([p.seed_local + user_offsets[i] for i, p in enumerate(parts)], dtype=np.int64),
        seed_users=np.array([p.seed_user for p in parts], dtype=np.int64),
        seed_times=np.array([p.seed_time for p in parts], dtype=np.int64),
    )
