"""Utility helpers for loading CSV tables, the JSON manifest and the graph cache."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import joblib

from .errors import SchemaError
from .graph import EdgeType, GraphSchema, TaskSpec, TemporalHeteroGraph, build_graph, edge_key

logger = logging.getLogger(__name__)

EDGE_HEADER = ("src_id", "dst_id", "timestamp")


@dataclass(frozen=True)
class Manifest:
    schema: GraphSchema
    task: TaskSpec
    node_files: Dict[str, Path]
    edge_files: Dict[EdgeType, Path]


def _read_csv(path: Path) -> Iterable[Dict[str, str]]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            yield row


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _edge_type(raw: object) -> EdgeType:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise SchemaError(f"edge types are [src, relation, dst] triples, got {raw!r}")
    return (str(raw[0]), str(raw[1]), str(raw[2]))


def parse_manifest(data: Mapping[str, object], root: Path) -> Manifest:
    try:
        node_types = tuple(str(t) for t in data["node_types"])  # type: ignore[union-attr]
        edge_types = tuple(_edge_type(et) for et in data["edge_types"])  # type: ignore[union-attr]
        schema = GraphSchema(
            node_types=node_types,
            edge_types=edge_types,
            user_type=str(data["user_type"]),
            item_type=str(data["item_type"]),
        )
        task_data = data["task"]
        task = TaskSpec(
            target_edge_type=_edge_type(task_data["target_edge_type"]),  # type: ignore[index]
            interval=int(task_data["interval"]),  # type: ignore[index]
            val_cutoff=int(task_data["val_cutoff"]),  # type: ignore[index]
            test_cutoff=int(task_data["test_cutoff"]),  # type: ignore[index]
            eval_k=int(task_data.get("eval_k", 10)),  # type: ignore[union-attr]
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed manifest: {exc}") from exc
    if task.target_edge_type not in schema.edge_types:
        raise SchemaError(f"target edge type {task.target_edge_type} is not declared")
    if task.target_edge_type[0] != schema.user_type or task.target_edge_type[2] != schema.item_type:
        raise SchemaError("target edge type must point from user_type to item_type")

    tables = data.get("tables", {}) or {}
    node_names = tables.get("nodes", {}) if isinstance(tables, dict) else {}
    edge_names = tables.get("edges", {}) if isinstance(tables, dict) else {}
    node_files = {t: root / node_names.get(t, f"{t}.csv") for t in schema.node_types}
    edge_files = {
        et: root / edge_names.get(edge_key(et), f"{edge_key(et)}.csv") for et in schema.edge_types
    }
    return Manifest(schema=schema, task=task, node_files=node_files, edge_files=edge_files)


def manifest_dict(schema: GraphSchema, task: TaskSpec) -> Dict[str, object]:
    return {
        "node_types": list(schema.node_types),
        "edge_types": [list(et) for et in schema.edge_types],
        "user_type": schema.user_type,
        "item_type": schema.item_type,
        "task": {
            "target_edge_type": list(task.target_edge_type),
            "interval": task.interval,
            "val_cutoff": task.val_cutoff,
            "test_cutoff": task.test_cutoff,
            "eval_k": task.eval_k,
        },
    }


def load_manifest(path: Path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return parse_manifest(data, path.parent)


def load_dataset(manifest_path: Path) -> Tuple[TemporalHeteroGraph, TaskSpec]:
    manifest = load_manifest(manifest_path)
    node_tables: Dict[str, List[Dict[str, str]]] = {}
    for node_type, path in manifest.node_files.items():
        if not path.exists():
            raise FileNotFoundError(f"node table for {node_type!r} not found: {path}")
        node_tables[node_type] = list(_read_csv(path))
    edge_tables: Dict[EdgeType, List[Dict[str, str]]] = {}
    for edge_type, path in manifest.edge_files.items():
        if not path.exists():
            raise FileNotFoundError(f"edge table for {edge_key(edge_type)} not found: {path}")
        edge_tables[edge_type] = list(_read_csv(path))
    logger.info("loading dataset from %s", manifest_path)
    graph = build_graph(node_tables, edge_tables, manifest.schema)
    return graph, manifest.task


def save_graph_cache(graph: TemporalHeteroGraph, task: TaskSpec, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump({"graph": graph, "task": task}, path)


def load_graph_cache(path: Path) -> Tuple[TemporalHeteroGraph, TaskSpec]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph cache not found: {path}. Run `ingest` first.")
    payload = joblib.load(path)
    return payload["graph"], payload["task"]
