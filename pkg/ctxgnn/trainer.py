"""Mini-batch training with a shared sampled-softmax class set per batch."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from .config import TrainConfig
from .errors import ClassBudgetTooSmall, EmptyTrainingSet
from .evaluation import evaluate_split
from .graph import TaskSpec, TemporalHeteroGraph, ground_truth_items, ground_truth_table
from .model import ContextGNN, ModelConfig, ModelParams
from .sampler import Subgraph, collate, sample_subgraph
from .tensor_ops import AdamState, Params, adam_step, row_dot, segment_sum, softmax_xent

logger = logging.getLogger(__name__)

SeedKey = Tuple[int, int]


class TrainingRow(NamedTuple):
    user: int
    seed_time: int
    item: int


def training_rows(graph: TemporalHeteroGraph, task: TaskSpec) -> List[TrainingRow]:
    """One row per distinct (user, T, item) among target edges up to val_cutoff.

    T is the latest snapshot boundary strictly before the edge time, with
    boundaries spaced ``task.interval`` apart and ending at ``val_cutoff``.
    """
    store = graph.edge_store(task.target_edge_type)
    mask = store.time <= task.val_cutoff
    if not mask.any():
        return []
    times = store.time[mask]
    steps = (task.val_cutoff - times) // task.interval + 1
    seeds = task.val_cutoff - steps * task.interval
    table = np.unique(np.stack([store.src[mask], seeds, store.dst[mask]], axis=1), axis=0)
    return [TrainingRow(int(u), int(t), int(i)) for u, t, i in table]


@dataclass(frozen=True)
class BatchClasses:
    class_ids: np.ndarray
    position_of: Dict[int, int]
    targets: np.ndarray
    masked: Tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return int(self.class_ids.shape[0])


def sample_classes(
    rows: Sequence[TrainingRow],
    subgraph_items: Sequence[int],
    C: int,
    num_items: int,
    rng: np.random.Generator,
    positives: Optional[Mapping[SeedKey, Set[int]]] = None,
) -> BatchClasses:
    """Ground-truth items first, then subgraph items, then a uniform fill."""
    budget = min(C, num_items)
    ground_truth = list(dict.fromkeys(row.item for row in rows))
    if len(ground_truth) > budget:
        raise ClassBudgetTooSmall(f"C={C} but the batch has {len(ground_truth)} distinct ground-truth items")
    taken = set(ground_truth)
    local = np.array(sorted({int(i) for i in subgraph_items} - taken), dtype=np.int64)
    room = budget - len(ground_truth)
    if local.size > room:
        local = np.sort(rng.choice(local, size=room, replace=False))
    classes = np.concatenate([np.array(ground_truth, dtype=np.int64), local])
    room -= local.size
    if room > 0:
        pool = np.setdiff1d(np.arange(num_items, dtype=np.int64), classes, assume_unique=True)
        classes = np.concatenate([classes, rng.choice(pool, size=room, replace=False)])
    position_of = {int(item): col for col, item in enumerate(classes)}

    targets = np.array([position_of[row.item] for row in rows], dtype=np.int64)
    masked = []
    for row in rows:
        others = positives.get((row.user, row.seed_time), set()) if positives else set()
        masked.append(
            np.array(sorted(position_of[i] for i in others if i != row.item and i in position_of), dtype=np.int64)
        )
    return BatchClasses(class_ids=classes, position_of=position_of, targets=targets, masked=tuple(masked))


def seed_keys(rows: Sequence[TrainingRow]) -> List[SeedKey]:
    return list(dict.fromkeys((row.user, row.seed_time) for row in rows))


def batch_loss(
    model: ContextGNN,
    graph: TemporalHeteroGraph,
    rows: Sequence[TrainingRow],
    classes: BatchClasses,
    subgraphs: Mapping[SeedKey, Subgraph],
) -> Tuple[float, Params]:
    """Sampled-softmax loss of one batch and its gradient for every parameter.

    Each row's logits come from its seed's subgraph: local classes use the
    pair head plus the fusion offset, the rest use the tower head.
    """
    keys = seed_keys(rows)
    member_of = {key: m for m, key in enumerate(keys)}
    row_member = np.array([member_of[(row.user, row.seed_time)] for row in rows], dtype=np.int64)
    state = model.forward(collate([subgraphs[key] for key in keys]), graph)
    h, offset = state.h_seed, state.offset
    batch = state.batch
    config = model.config

    items = batch.nodes[model.item_type]
    columns = np.array([classes.position_of.get(int(g), -1) for g in items], dtype=np.int64)
    pair_rows = np.flatnonzero(columns >= 0)
    pair_members = batch.owner[model.item_type][pair_rows]
    pair_cols = columns[pair_rows]
    item_hidden = state.hidden[model.item_type]

    vectors = vector_cache = None
    if config.pair_only:
        logits = np.full((batch.size, classes.size), -np.inf, dtype=h.dtype)
    else:
        vectors, vector_cache = model.item_vectors(graph, classes.class_ids)
        logits = h @ vectors.T
    if not config.tower_only:
        logits[pair_members, pair_cols] = row_dot(h[pair_members], item_hidden[pair_rows]) + offset[pair_members]

    row_logits = logits[row_member]
    for i, cols in enumerate(classes.masked):
        row_logits[i, cols] = -np.inf
    keep = np.isfinite(row_logits[np.arange(len(rows)), classes.targets])
    grad_rows = np.zeros_like(row_logits)
    loss, grad_kept = softmax_xent(row_logits[keep], classes.targets[keep])
    grad_rows[keep] = grad_kept
    grad_logits = segment_sum(grad_rows, row_member, batch.size)

    grad_seed = np.zeros_like(h)
    grad_items = np.zeros_like(item_hidden)
    grad_offset = np.zeros_like(offset)
    if not config.tower_only:
        grad_pair = grad_logits[pair_members, pair_cols]
        grad_logits[pair_members, pair_cols] = 0.0
        grad_seed += segment_sum(grad_pair[:, None] * item_hidden[pair_rows], pair_members, batch.size)
        grad_items[pair_rows] = grad_pair[:, None] * h[pair_members]
        grad_offset += segment_sum(grad_pair[:, None], pair_members, batch.size)[:, 0]
    if vectors is not None:
        grad_seed += grad_logits @ vectors
    grads = model.backward(state, grad_seed, grad_items, grad_offset)
    if vectors is not None:
        model.item_vectors_backward(grad_logits.T @ h, vector_cache, grads)
    return loss, grads


def train_step(
    rows: Sequence[TrainingRow],
    graph: TemporalHeteroGraph,
    task: TaskSpec,
    model: ContextGNN,
    opt_state: AdamState,
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[ModelParams, AdamState, float]:
    """Stateless single step: sample subgraphs and classes, then one Adam update."""
    keys = seed_keys(rows)
    subgraphs = {key: sample_subgraph(graph, key[0], key[1], config.fanouts) for key in keys}
    positives = {key: ground_truth_items(graph, key[0], key[1], task) for key in keys}
    union = sorted({int(i) for sub in subgraphs.values() for i in sub.nodes[graph.item_type]})
    classes = sample_classes(rows, union, config.classes_C, graph.num_items, rng, positives)
    loss, grads = batch_loss(model, graph, rows, classes, subgraphs)
    _, opt_state = adam_step(model.params.tensors, grads, opt_state)
    return model.params, opt_state, loss


@dataclass
class TrainReport:
    seed: int
    epoch_losses: List[float] = field(default_factory=list)
    val_map: List[float] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_text(self) -> str:
        lines = [f"seed={self.seed}", f"epochs={len(self.epoch_losses)}", f"best_epoch={self.best_epoch}"]
        for epoch, loss in enumerate(self.epoch_losses):
            val = self.val_map[epoch] if epoch < len(self.val_map) else float("nan")
            lines.append(f"epoch{epoch}.loss={loss:.6f}")
            lines.append(f"epoch{epoch}.val_map={val:.6f}")
            lines.append(f"epoch{epoch}.seconds={self.epoch_seconds[epoch]:.3f}")
        return "\n".join(lines) + "\n"


@dataclass
class PreparedBatch:
    rows: List[TrainingRow]
    subgraphs: Dict[SeedKey, Subgraph]
    positives: Dict[SeedKey, Set[int]]
    items: List[int]


class Trainer:
    """Epoch loop over training rows with cached subgraphs and early stopping."""

    def __init__(
        self,
        graph: TemporalHeteroGraph,
        task: TaskSpec,
        config: TrainConfig,
        model: Optional[ContextGNN] = None,
    ) -> None:
        self.graph = graph
        self.task = task
        self.config = config
        self.model = model or ContextGNN.initialize(graph, ModelConfig.from_train_config(config), config.seed)
        self.rng = np.random.default_rng(config.seed)
        self.optimizer = AdamState(lr=config.lr)
        self._subgraphs: Dict[SeedKey, Subgraph] = {}
        self._positives: Dict[SeedKey, Set[int]] = {}

    def prepare(self, rows: Sequence[TrainingRow]) -> PreparedBatch:
        subgraphs: Dict[SeedKey, Subgraph] = {}
        positives: Dict[SeedKey, Set[int]] = {}
        for user, T in seed_keys(rows):
            key = (user, T)
            if key not in self._subgraphs:
                self._subgraphs[key] = sample_subgraph(self.graph, user, T, self.config.fanouts)
                self._positives[key] = ground_truth_items(self.graph, user, T, self.task)
            subgraphs[key] = self._subgraphs[key]
            positives[key] = self._positives[key]
        items = sorted({int(i) for sub in subgraphs.values() for i in sub.nodes[self.graph.item_type]})
        return PreparedBatch(rows=list(rows), subgraphs=subgraphs, positives=positives, items=items)

    def step(self, prepared: PreparedBatch) -> float:
        classes = sample_classes(
            prepared.rows, prepared.items, self.config.classes_C, self.graph.num_items, self.rng, prepared.positives
        )
        loss, grads = batch_loss(self.model, self.graph, prepared.rows, classes, prepared.subgraphs)
        adam_step(self.model.params.tensors, grads, self.optimizer)
        return loss

    def train_step(self, rows: Sequence[TrainingRow]) -> float:
        return self.step(self.prepare(rows))

    def batches(self, rows: Sequence[TrainingRow]) -> List[List[TrainingRow]]:
        order = self.rng.permutation(len(rows))
        size = self.config.batch_size
        return [[rows[i] for i in order[start:start + size]] for start in range(0, len(rows), size)]

    def _prepared(self, batches: List[List[TrainingRow]]) -> Iterator[PreparedBatch]:
        if not self.config.pipeline:
            for rows in batches:
                yield self.prepare(rows)
            return
        # one batch of lookahead; the optimizer step stays on this thread
        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(self.prepare, batches[0]) if batches else None
            for i in range(len(batches)):
                current = pending.result()
                pending = pool.submit(self.prepare, batches[i + 1]) if i + 1 < len(batches) else None
                yield current

    def run_epoch(self, rows: Sequence[TrainingRow]) -> float:
        losses = [self.step(prepared) for prepared in self._prepared(self.batches(rows))]
        return float(np.mean(losses)) if losses else 0.0

    def fit(self) -> TrainReport:
        rows = training_rows(self.graph, self.task)
        if not rows:
            raise EmptyTrainingSet("no target edges at or before val_cutoff")
        report = TrainReport(seed=self.config.seed)
        validate = bool(ground_truth_table(self.graph, self.task.val_cutoff, self.task))
        if not validate:
            logger.warning("validation window is empty; keeping the last epoch's parameters")
        best_params = self.model.params.copy()
        best_map = -1.0
        stale = 0
        for epoch in range(self.config.max_epochs):
            start = time.perf_counter()
            loss = self.run_epoch(rows)
            val_map = evaluate_split(self.graph, self.model, self.task, "val", self.config).map if validate else 0.0
            seconds = time.perf_counter() - start
            report.epoch_losses.append(loss)
            report.val_map.append(val_map)
            report.epoch_seconds.append(seconds)
            logger.info("epoch %d: loss=%.4f val_map=%.4f (%.1fs)", epoch, loss, val_map, seconds)
            if not validate or val_map > best_map:
                best_map, stale = val_map, 0
                report.best_epoch = epoch
                best_params = self.model.params.copy()
                continue
            stale += 1
            if stale >= self.config.patience:
                logger.info("early stop after epoch %d; best epoch %d", epoch, report.best_epoch)
                break
        self.model.params = best_params
        return report


def fit(graph: TemporalHeteroGraph, task: TaskSpec, config: TrainConfig) -> Tuple[ContextGNN, TrainReport]:
    trainer = Trainer(graph, task, config)
    report = trainer.fit()
    return trainer.model, report
