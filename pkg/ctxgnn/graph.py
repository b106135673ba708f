"""Immutable temporal heterogeneous graph with time-sorted adjacency."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from sklearn.preprocessing import OrdinalEncoder, StandardScaler

from .errors import BadTimestamp, DanglingEdge, SchemaError, UnknownType

logger = logging.getLogger(__name__)

EdgeType = Tuple[str, str, str]
REVERSE_PREFIX = "rev_"
SPLITS = ("val", "test")


def edge_key(edge_type: EdgeType) -> str:
    return "__".join(edge_type)


def is_reverse(edge_type: EdgeType) -> bool:
    return edge_type[1].startswith(REVERSE_PREFIX)


def reverse_edge_type(edge_type: EdgeType) -> EdgeType:
    src, rel, dst = edge_type
    if rel.startswith(REVERSE_PREFIX):
        return (dst, rel[len(REVERSE_PREFIX):], src)
    return (dst, REVERSE_PREFIX + rel, src)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GraphSchema:
    node_types: Tuple[str, ...]
    edge_types: Tuple[EdgeType, ...]
    user_type: str
    item_type: str

    def __post_init__(self) -> None:
        if len(set(self.node_types)) != len(self.node_types):
            raise SchemaError("duplicate node type")
        for role in (self.user_type, self.item_type):
            if role not in self.node_types:
                raise UnknownType(f"{role!r} is not a declared node type")
        if self.user_type == self.item_type:
            raise SchemaError("user_type and item_type must differ")
        if len(set(self.edge_types)) != len(self.edge_types):
            raise SchemaError("duplicate edge type")
        for edge_type in self.edge_types:
            if len(edge_type) != 3:
                raise SchemaError(f"edge type must be a (src, relation, dst) triple: {edge_type!r}")
            src, rel, dst = edge_type
            for endpoint in (src, dst):
                if endpoint not in self.node_types:
                    raise UnknownType(f"edge type {edge_type} references undeclared type {endpoint!r}")
            if rel.startswith(REVERSE_PREFIX):
                raise SchemaError(f"relation names may not start with {REVERSE_PREFIX!r}: {rel}")


@dataclass(frozen=True)
class TaskSpec:
    target_edge_type: EdgeType
    interval: int
    val_cutoff: int
    test_cutoff: int
    eval_k: int = 10

    def __post_init__(self) -> None:
        if self.interval <= 0:
            raise SchemaError("task interval must be > 0")
        if self.val_cutoff >= self.test_cutoff:
            raise SchemaError("val_cutoff must be earlier than test_cutoff")
        if self.eval_k < 1:
            raise SchemaError("eval_k must be >= 1")

    def cutoff(self, split: str) -> int:
        if split == "val":
            return self.val_cutoff
        if split == "test":
            return self.test_cutoff
        raise SchemaError(f"unknown split {split!r}; expected one of {SPLITS}")


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    kind: str  # "numeric" or "categorical"
    categories: Tuple[str, ...] = ()

    @property
    def width(self) -> int:
        # slot 0 of a categorical block is reserved for unknown / missing values
        return 1 if self.kind == "numeric" else len(self.categories) + 1


@dataclass(frozen=True)
class EdgeStore:
    """Edges of one type sorted by (src, timestamp) with a CSR index per side."""

    src: np.ndarray
    dst: np.ndarray
    time: np.ndarray
    out_indptr: np.ndarray
    in_order: np.ndarray
    in_indptr: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def out_positions(self, node: int) -> np.ndarray:
        return np.arange(self.out_indptr[node], self.out_indptr[node + 1])

    def in_positions(self, node: int) -> np.ndarray:
        return self.in_order[self.in_indptr[node]:self.in_indptr[node + 1]]


@dataclass(frozen=True)
class TemporalHeteroGraph:
    schema: GraphSchema
    num_nodes: Dict[str, int]
    features: Dict[str, np.ndarray]
    feature_columns: Dict[str, Tuple[FeatureColumn, ...]]
    edges: Dict[EdgeType, EdgeStore]

    @property
    def node_types(self) -> Tuple[str, ...]:
        return self.schema.node_types

    @property
    def edge_types(self) -> Tuple[EdgeType, ...]:
        return self.schema.edge_types

    @property
    def user_type(self) -> str:
        return self.schema.user_type

    @property
    def item_type(self) -> str:
        return self.schema.item_type

    @property
    def num_users(self) -> int:
        return self.num_nodes[self.user_type]

    @property
    def num_items(self) -> int:
        return self.num_nodes[self.item_type]

    def feature_dim(self, node_type: str) -> int:
        return int(self.features[node_type].shape[1])

    def edge_store(self, edge_type: EdgeType) -> EdgeStore:
        try:
            return self.edges[tuple(edge_type)]  # type: ignore[index]
        except KeyError as exc:
            raise UnknownType(f"unknown edge type {edge_type}") from exc

    def incident(self, node_type: str) -> List[Tuple[EdgeType, Tuple[bool, ...]]]:
        """Edge types touching ``node_type`` with the walk directions they allow.

        A direction flag of True walks the edge from dst back to src. Edge
        types whose endpoints share ``node_type`` are listed once with both
        directions, so one fanout covers them.
        """
        walks: List[Tuple[EdgeType, Tuple[bool, ...]]] = []
        for edge_type in self.edge_types:
            directions = tuple(
                walk_back
                for walk_back, end in ((False, edge_type[0]), (True, edge_type[2]))
                if end == node_type
            )
            if directions:
                walks.append((edge_type, directions))
        return walks


# Ingestion -------------------------------------------------------------------


def parse_timestamp(value: object) -> int:
    """Integer seconds since epoch; ISO-8601 strings are accepted (UTC if naive)."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    text = str(value).strip() if value is not None else ""
    if not text:
        raise BadTimestamp("empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        number = float(text)
    except ValueError:
        try:
            moment = datetime.fromisoformat(text)
        except ValueError as exc:
            raise BadTimestamp(f"unparseable timestamp {text!r}") from exc
        if moment.tzinfo is None:
            moment = moment.replace(tzinfo=timezone.utc)
        return int(moment.timestamp())
    if not np.isfinite(number) or number != int(number):
        raise BadTimestamp(f"timestamp must be integer seconds, got {text!r}")
    return int(number)


def _is_missing(value: object) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def _is_number(value: object) -> bool:
    try:
        float(value)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        return False
    return True


def _column_names(rows: Sequence[Mapping[str, object]]) -> List[str]:
    names: List[str] = []
    for row in rows:
        for name in row:
            if name != "id" and name not in names:
                names.append(name)
    return names


def _encode_features(node_type: str, rows: Sequence[Mapping[str, object]]) -> Tuple[np.ndarray, Tuple[FeatureColumn, ...]]:
    blocks: List[np.ndarray] = []
    columns: List[FeatureColumn] = []
    for name in _column_names(rows):
        raw = [row.get(name) for row in rows]
        present = [value for value in raw if not _is_missing(value)]
        if all(_is_number(value) for value in present):
            values = np.array([np.nan if _is_missing(v) else float(v) for v in raw], dtype=np.float64).reshape(-1, 1)
            if present:
                values = StandardScaler().fit_transform(values)
            blocks.append(np.nan_to_num(values, nan=0.0))
            columns.append(FeatureColumn(name=name, kind="numeric"))
            continue
        encoder = OrdinalEncoder(handle_unknown="use_encoded_value", unknown_value=-1, dtype=np.int64)
        encoder.fit(np.array([str(v).strip() for v in present], dtype=object).reshape(-1, 1))
        categories = tuple(str(c) for c in encoder.categories_[0])
        text = np.array(["" if _is_missing(v) else str(v).strip() for v in raw], dtype=object).reshape(-1, 1)
        codes = encoder.transform(text)[:, 0].astype(np.int64) + 1
        column = FeatureColumn(name=name, kind="categorical", categories=categories)
        blocks.append(np.eye(column.width, dtype=np.float64)[codes])
        columns.append(column)
    matrix = np.hstack(blocks) if blocks else np.zeros((len(rows), 0), dtype=np.float64)
    logger.debug("encoded %s features: %d rows x %d columns", node_type, matrix.shape[0], matrix.shape[1])
    return matrix, tuple(columns)


def _node_ids(node_type: str, rows: Sequence[Mapping[str, object]]) -> np.ndarray:
    try:
        ids = np.array([int(str(row["id"]).strip()) for row in rows], dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"node table {node_type!r} needs integer 'id' values") from exc
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise SchemaError(f"node ids of {node_type!r} must be dense 0-based integers")
    return ids


def _edge_store(
    edge_type: EdgeType,
    rows: Sequence[Mapping[str, object]],
    num_src: int,
    num_dst: int,
) -> EdgeStore:
    src = np.empty(len(rows), dtype=np.int64)
    dst = np.empty(len(rows), dtype=np.int64)
    time = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        try:
            src[i] = int(str(row["src_id"]).strip())
            dst[i] = int(str(row["dst_id"]).strip())
        except (KeyError, ValueError) as exc:
            raise DanglingEdge(f"{edge_key(edge_type)} row {i}: endpoint ids missing or not integers") from exc
        time[i] = parse_timestamp(row.get("timestamp"))
        if not (0 <= src[i] < num_src and 0 <= dst[i] < num_dst):
            raise DanglingEdge(
                f"{edge_key(edge_type)} row {i}: edge ({src[i]}, {dst[i]}) outside node counts ({num_src}, {num_dst})"
            )
    # stable sorts keep input row order among equal timestamps
    order = np.argsort(time, kind="stable")
    order = order[np.argsort(src[order], kind="stable")]
    src, dst, time = src[order], dst[order], time[order]
    out_indptr = np.concatenate(([0], np.cumsum(np.bincount(src, minlength=num_src))))
    in_order = np.argsort(time, kind="stable")
    in_order = in_order[np.argsort(dst[in_order], kind="stable")]
    in_indptr = np.concatenate(([0], np.cumsum(np.bincount(dst, minlength=num_dst))))
    return EdgeStore(
        src=_frozen(src),
        dst=_frozen(dst),
        time=_frozen(time),
        out_indptr=_frozen(out_indptr.astype(np.int64)),
        in_order=_frozen(in_order.astype(np.int64)),
        in_indptr=_frozen(in_indptr.astype(np.int64)),
    )


def build_graph(
    node_tables: Mapping[str, Sequence[Mapping[str, object]]],
    edge_tables: Mapping[EdgeType, Sequence[Mapping[str, object]]],
    schema: GraphSchema,
) -> TemporalHeteroGraph:
    for node_type in node_tables:
        if node_type not in schema.node_types:
            raise UnknownType(f"node table for undeclared type {node_type!r}")
    for edge_type in edge_tables:
        if tuple(edge_type) not in schema.edge_types:
            raise UnknownType(f"edge table for undeclared edge type {edge_type}")

    num_nodes: Dict[str, int] = {}
    features: Dict[str, np.ndarray] = {}
    feature_columns: Dict[str, Tuple[FeatureColumn, ...]] = {}
    for node_type in schema.node_types:
        rows = list(node_tables.get(node_type, ()))
        ids = _node_ids(node_type, rows)
        rows = [rows[i] for i in np.argsort(ids, kind="stable")]
        matrix, columns = _encode_features(node_type, rows)
        num_nodes[node_type] = len(rows)
        features[node_type] = _frozen(matrix)
        feature_columns[node_type] = columns

    edges: Dict[EdgeType, EdgeStore] = {}
    for edge_type in schema.edge_types:
        rows = list(edge_tables.get(edge_type, ()))
        edges[edge_type] = _edge_store(edge_type, rows, num_nodes[edge_type[0]], num_nodes[edge_type[2]])

    logger.debug(
        "built graph: nodes=%s edges=%s",
        num_nodes,
        {edge_key(et): store.num_edges for et, store in edges.items()},
    )
    return TemporalHeteroGraph(
        schema=schema,
        num_nodes=num_nodes,
        features=features,
        feature_columns=feature_columns,
        edges=edges,
    )


# Queries ---------------------------------------------------------------------


def recent_positions(
    store: EdgeStore,
    node: int,
    T: int,
    fanout: Optional[int],
    reverse: bool = False,
) -> np.ndarray:
    """Edge positions with timestamp <= T, most recent first, truncated to ``fanout``."""
    positions = store.in_positions(node) if reverse else store.out_positions(node)
    cut = int(np.searchsorted(store.time[positions], T, side="right"))
    start = 0 if fanout is None else max(0, cut - fanout)
    return positions[start:cut][::-1]


def recent_walks(
    store: EdgeStore,
    node: int,
    T: int,
    fanout: Optional[int],
    directions: Sequence[bool],
) -> List[Tuple[int, bool]]:
    """(position, walk_back) pairs of the ``fanout`` most recent edges over all directions.

    Ties on timestamp go to the later edge position; a self-loop is walked once.
    """
    if len(directions) == 1:
        walk_back = directions[0]
        return [(p, walk_back) for p in recent_positions(store, node, T, fanout, walk_back).tolist()]
    walks: Dict[int, bool] = {}
    for walk_back in directions:
        for position in recent_positions(store, node, T, fanout, walk_back).tolist():
            walks.setdefault(position, walk_back)
    ordered = sorted(walks, key=lambda p: (int(store.time[p]), p), reverse=True)
    if fanout is not None:
        ordered = ordered[:fanout]
    return [(p, walks[p]) for p in ordered]


def _check_node(graph: TemporalHeteroGraph, node_type: str, node: int) -> None:
    if not 0 <= node < graph.num_nodes[node_type]:
        raise IndexError(f"{node_type} id {node} out of range [0, {graph.num_nodes[node_type]})")


def neighbors_before(
    graph: TemporalHeteroGraph,
    node: int,
    edge_type: EdgeType,
    T: int,
    fanout: Optional[int],
    reverse: bool = False,
) -> List[Tuple[int, int]]:
    store = graph.edge_store(edge_type)
    _check_node(graph, edge_type[2] if reverse else edge_type[0], node)
    positions = recent_positions(store, node, T, fanout, reverse)
    other = store.src if reverse else store.dst
    return [(int(other[p]), int(store.time[p])) for p in positions]


def ground_truth_items(graph: TemporalHeteroGraph, user: int, T: int, task: TaskSpec) -> Set[int]:
    store = graph.edge_store(task.target_edge_type)
    _check_node(graph, task.target_edge_type[0], user)
    positions = store.out_positions(user)
    times = store.time[positions]
    lo = int(np.searchsorted(times, T, side="right"))
    hi = int(np.searchsorted(times, T + task.interval, side="right"))
    return {int(item) for item in store.dst[positions[lo:hi]]}


def ground_truth_table(
    graph: TemporalHeteroGraph,
    T: int,
    task: TaskSpec,
    users: Optional[Iterable[int]] = None,
) -> Dict[int, Set[int]]:
    """Ground-truth sets of every user with a target edge in (T, T + interval]."""
    store = graph.edge_store(task.target_edge_type)
    mask = (store.time > T) & (store.time <= T + task.interval)
    table: Dict[int, Set[int]] = {}
    for user, item in zip(store.src[mask].tolist(), store.dst[mask].tolist()):
        table.setdefault(user, set()).add(item)
    if users is not None:
        wanted = set(users)
        table = {u: items for u, items in table.items() if u in wanted}
    return dict(sorted(table.items()))
