"""ContextGNN forward pass, scoring heads and exact manual backward pass."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ITEM_ENCODER_MODES, PRECISIONS, TrainConfig
from .errors import DepthMismatch, InvalidConfig, MissingEncoder, UnknownItem
from .graph import EdgeType, GraphSchema, TemporalHeteroGraph, edge_key, reverse_edge_type
from .sampler import Subgraph, SubgraphBatch, collate
from .tensor_ops import (
    AffineCache,
    Params,
    affine,
    affine_backward,
    dtype_of,
    gather,
    gather_backward,
    inner_products,
    normal_init,
    segment_sum,
    segment_sum_backward,
    uniform_init,
)


PAIR = "pair"
TOWER = "tower"
SHALLOW = "shallow_items"


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    item_encoder_mode: str = "transductive_shallow"
    fusion_hidden: int = 32
    precision: str = "float32"
    fanouts: Tuple[int, ...] = (12, 12)
    pair_only: bool = False
    tower_only: bool = False

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.num_layers < 1 or self.fusion_hidden < 1:
            raise InvalidConfig("hidden_dim, num_layers and fusion_hidden must be >= 1")
        if len(self.fanouts) != self.num_layers:
            raise InvalidConfig("sampler depth (len(fanouts)) must equal num_layers")
        if self.item_encoder_mode not in ITEM_ENCODER_MODES:
            raise InvalidConfig(f"item_encoder_mode must be one of {ITEM_ENCODER_MODES}")
        if self.precision not in PRECISIONS:
            raise InvalidConfig(f"precision must be one of {PRECISIONS}")
        if self.pair_only and self.tower_only:
            raise InvalidConfig("pair_only and tower_only are mutually exclusive")

    @classmethod
    def from_train_config(cls, config: TrainConfig) -> "ModelConfig":
        return cls(
            hidden_dim=config.hidden_dim,
            num_layers=config.num_layers,
            item_encoder_mode=config.item_encoder_mode,
            fusion_hidden=config.fusion_hidden,
            precision=config.precision,
            fanouts=tuple(config.fanouts),
            pair_only=config.pair_only,
            tower_only=config.tower_only,
        )

    @property
    def dtype(self) -> np.dtype:
        return dtype_of(self.precision)

    @property
    def inductive(self) -> bool:
        return self.item_encoder_mode == "inductive_feature"


@dataclass
class ModelParams:
    """All learnable tensors by name; reads of the shallow item matrix are counted."""

    tensors: Params
    shallow_reads: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> List[str]:
        return sorted(self.tensors)

    def shallow_rows(self, item_ids: np.ndarray) -> np.ndarray:
        if SHALLOW not in self.tensors:
            raise MissingEncoder("this model has no shallow item embeddings (inductive mode)")
        with self._lock:
            self.shallow_reads += 1
        return gather(self.tensors[SHALLOW], item_ids)

    def copy(self) -> "ModelParams":
        return ModelParams(tensors={k: v.copy() for k, v in self.tensors.items()})


def message_edge_types(schema: GraphSchema) -> List[EdgeType]:
    types: List[EdgeType] = []
    for edge_type in schema.edge_types:
        types.append(edge_type)
        types.append(reverse_edge_type(edge_type))
    return types


def init_params(graph: TemporalHeteroGraph, config: ModelConfig, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    d, dtype = config.hidden_dim, config.dtype
    tensors: Params = {}

    def linear(prefix: str, fan_in: int, fan_out: int, bias: bool = True) -> None:
        tensors[f"{prefix}.W"] = uniform_init(rng, fan_in, (fan_in, fan_out), dtype)
        if bias:
            tensors[f"{prefix}.b"] = uniform_init(rng, fan_in, (fan_out,), dtype)

    for node_type in graph.node_types:
        linear(f"enc.{node_type}.1", graph.feature_dim(node_type), d)
        linear(f"enc.{node_type}.2", d, d)
    tensors["indicator"] = uniform_init(rng, d, (d,), dtype)
    for layer in range(config.num_layers):
        for node_type in graph.node_types:
            linear(f"gnn.{layer}.self.{node_type}", d, d)
        for edge_type in message_edge_types(graph.schema):
            linear(f"gnn.{layer}.msg.{edge_key(edge_type)}", d, d, bias=False)
    if config.inductive:
        linear("item_enc.1", graph.feature_dim(graph.item_type), d)
        linear("item_enc.2", d, d)
    else:
        tensors[SHALLOW] = normal_init(rng, 1.0 / np.sqrt(d), (graph.num_items, d), dtype)
    linear("fusion.1", d, config.fusion_hidden)
    linear("fusion.2", config.fusion_hidden, 1)
    return ModelParams(tensors=tensors)


@dataclass
class ItemVectorCache:
    item_ids: np.ndarray
    layers: Tuple[AffineCache, ...] = ()


@dataclass
class LayerCache:
    inputs: Dict[str, np.ndarray]
    outputs: Dict[str, np.ndarray]
    self_caches: Dict[str, AffineCache]
    msg_caches: Dict[EdgeType, AffineCache]
    relu: bool


@dataclass
class ForwardState:
    batch: SubgraphBatch
    encoder_caches: Dict[str, Tuple[AffineCache, AffineCache]]
    item_cache: ItemVectorCache
    layers: List[LayerCache]
    hidden: Dict[str, np.ndarray]
    h_seed: np.ndarray
    offset: np.ndarray
    fusion_caches: Tuple[AffineCache, AffineCache]


@dataclass
class UserContext:
    """Readout of one seed user: h_v, item representations and fusion offset."""

    user: int
    seed_time: int
    h_v: np.ndarray
    h_items: Dict[int, np.ndarray]
    offset: float
    local_ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.local_ids is None:
            self.local_ids = np.array(sorted(self.h_items), dtype=np.int64)


class ContextGNN:
    def __init__(self, config: ModelConfig, params: ModelParams, schema: GraphSchema) -> None:
        self.config = config
        self.params = params
        self.schema = schema
        self.message_types = message_edge_types(schema)
        # seeds pushed through message passing; one per (user, T) per pass
        self.forward_seeds = 0
        self._count_lock = threading.Lock()

    @classmethod
    def initialize(cls, graph: TemporalHeteroGraph, config: ModelConfig, seed: int = 0) -> "ContextGNN":
        return cls(config, init_params(graph, config, seed), graph.schema)

    @property
    def user_type(self) -> str:
        return self.schema.user_type

    @property
    def item_type(self) -> str:
        return self.schema.item_type

    def zero_grads(self) -> Params:
        return {name: np.zeros_like(value) for name, value in self.params.tensors.items()}

    # Encoding and context injection ----------------------------------------------

    def encode_inputs(
        self, batch: SubgraphBatch, graph: TemporalHeteroGraph
    ) -> Tuple[Dict[str, np.ndarray], Dict[str, Tuple[AffineCache, AffineCache]]]:
        dtype = self.config.dtype
        hidden: Dict[str, np.ndarray] = {}
        caches: Dict[str, Tuple[AffineCache, AffineCache]] = {}
        for node_type, ids in batch.nodes.items():
            if f"enc.{node_type}.1.W" not in self.params:
                raise MissingEncoder(f"no input encoder for node type {node_type!r}")
            features = graph.features[node_type][ids].astype(dtype)
            inner, c1 = affine(features, self.params[f"enc.{node_type}.1.W"], self.params[f"enc.{node_type}.1.b"], relu=True)
            hidden[node_type], c2 = affine(inner, self.params[f"enc.{node_type}.2.W"], self.params[f"enc.{node_type}.2.b"])
            caches[node_type] = (c1, c2)
        return hidden, caches

    def item_vectors(self, graph: TemporalHeteroGraph, item_ids: Sequence[int]) -> Tuple[np.ndarray, ItemVectorCache]:
        """Tower-side item representation w_w: shallow row or inductive encoding."""
        ids = np.asarray(item_ids, dtype=np.int64)
        if not self.config.inductive:
            return self.params.shallow_rows(ids), ItemVectorCache(item_ids=ids)
        features = graph.features[self.item_type][ids].astype(self.config.dtype)
        inner, c1 = affine(features, self.params["item_enc.1.W"], self.params["item_enc.1.b"], relu=True)
        vectors, c2 = affine(inner, self.params["item_enc.2.W"], self.params["item_enc.2.b"])
        return vectors, ItemVectorCache(item_ids=ids, layers=(c1, c2))

    def item_vectors_backward(self, grad: np.ndarray, cache: ItemVectorCache, grads: Params) -> None:
        if not cache.layers:
            grads[SHALLOW] += gather_backward(grad, cache.item_ids, grads[SHALLOW].shape[0])
            return
        c1, c2 = cache.layers
        grad_inner, dW, db = affine_backward(grad, c2)
        grads["item_enc.2.W"] += dW
        grads["item_enc.2.b"] += db
        _, dW, db = affine_backward(grad_inner, c1)
        grads["item_enc.1.W"] += dW
        grads["item_enc.1.b"] += db

    def item_matrix(self, graph: TemporalHeteroGraph) -> np.ndarray:
        return self.item_vectors(graph, np.arange(graph.num_items))[0]

    def inject_context(
        self, hidden: Dict[str, np.ndarray], batch: SubgraphBatch, graph: TemporalHeteroGraph
    ) -> Tuple[Dict[str, np.ndarray], ItemVectorCache]:
        injected = {t: h.copy() for t, h in hidden.items()}
        injected[self.user_type][batch.seeds] += self.params["indicator"]
        vectors, cache = self.item_vectors(graph, batch.nodes[self.item_type])
        injected[self.item_type] += vectors
        return injected, cache

    # Message passing ---------------------------------------------------------------

    def _layer(self, layer: int, batch: SubgraphBatch, inputs: Dict[str, np.ndarray], last: bool) -> LayerCache:
        outputs: Dict[str, np.ndarray] = {}
        self_caches: Dict[str, AffineCache] = {}
        msg_caches: Dict[EdgeType, AffineCache] = {}
        for node_type, h in inputs.items():
            z, self_caches[node_type] = affine(
                h, self.params[f"gnn.{layer}.self.{node_type}.W"], self.params[f"gnn.{layer}.self.{node_type}.b"]
            )
            for edge_type in self.message_types:
                edges = batch.edges.get(edge_type)
                if edge_type[2] != node_type or edges is None or len(edges) == 0:
                    continue
                summed = segment_sum(gather(inputs[edge_type[0]], edges.src), edges.dst, h.shape[0])
                message, msg_caches[edge_type] = affine(summed, self.params[f"gnn.{layer}.msg.{edge_key(edge_type)}.W"])
                z = z + message
            outputs[node_type] = z if last else np.maximum(z, 0.0)
        return LayerCache(inputs=inputs, outputs=outputs, self_caches=self_caches, msg_caches=msg_caches, relu=not last)

    def propagate(self, batch: SubgraphBatch, injected: Dict[str, np.ndarray]) -> List[LayerCache]:
        if batch.depth != self.config.num_layers:
            raise DepthMismatch(f"subgraph depth {batch.depth} != num_layers {self.config.num_layers}")
        with self._count_lock:
            self.forward_seeds += batch.size
        layers: List[LayerCache] = []
        hidden = injected
        for layer in range(self.config.num_layers):
            cache = self._layer(layer, batch, hidden, last=layer == self.config.num_layers - 1)
            layers.append(cache)
            hidden = cache.outputs
        return layers

    def gnn_forward(self, sub: Subgraph, injected: Dict[str, np.ndarray]) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
        """Layer-k readout of the seed user and of every item node in ``sub``."""
        batch = collate([sub])
        hidden = self.propagate(batch, injected)[-1].outputs
        items = batch.nodes[self.item_type]
        h_items = {int(g): hidden[self.item_type][i] for i, g in enumerate(items)}
        return hidden[self.user_type][batch.seeds[0]], h_items

    # Fusion head -------------------------------------------------------------------

    def _fusion(self, h_v: np.ndarray) -> Tuple[np.ndarray, Tuple[AffineCache, AffineCache]]:
        inner, c1 = affine(h_v, self.params["fusion.1.W"], self.params["fusion.1.b"], relu=True)
        out, c2 = affine(inner, self.params["fusion.2.W"], self.params["fusion.2.b"])
        return out[..., 0], (c1, c2)

    def fusion_offset(self, h_v: np.ndarray) -> np.ndarray | float:
        offset, _ = self._fusion(h_v)
        return float(offset) if h_v.ndim == 1 else offset

    # Full pass ---------------------------------------------------------------------

    def forward(self, batch: SubgraphBatch, graph: TemporalHeteroGraph) -> ForwardState:
        hidden0, encoder_caches = self.encode_inputs(batch, graph)
        injected, item_cache = self.inject_context(hidden0, batch, graph)
        layers = self.propagate(batch, injected)
        hidden = layers[-1].outputs
        h_seed = hidden[self.user_type][batch.seeds]
        offset, fusion_caches = self._fusion(h_seed)
        return ForwardState(
            batch=batch,
            encoder_caches=encoder_caches,
            item_cache=item_cache,
            layers=layers,
            hidden=hidden,
            h_seed=h_seed,
            offset=offset,
            fusion_caches=fusion_caches,
        )

    def backward(
        self,
        state: ForwardState,
        grad_seed: np.ndarray,
        grad_items: np.ndarray,
        grad_offset: np.ndarray,
        grads: Optional[Params] = None,
    ) -> Params:
        """Accumulate parameter gradients given gradients w.r.t. the readouts.

        ``grad_seed`` is per seed (batch.size x d), ``grad_items`` per local item
        node (layer-k item rows) and ``grad_offset`` per seed.
        """
        grads = grads if grads is not None else self.zero_grads()
        batch = state.batch
        grad_seed = grad_seed.copy()

        c1, c2 = state.fusion_caches
        grad_inner, dW, db = affine_backward(grad_offset.reshape(-1, 1), c2)
        grads["fusion.2.W"] += dW
        grads["fusion.2.b"] += db
        grad_h, dW, db = affine_backward(grad_inner, c1)
        grads["fusion.1.W"] += dW
        grads["fusion.1.b"] += db
        grad_seed += grad_h

        grad_hidden = {t: np.zeros_like(h) for t, h in state.hidden.items()}
        grad_hidden[self.user_type][batch.seeds] += grad_seed
        grad_hidden[self.item_type] += grad_items

        for layer in reversed(range(len(state.layers))):
            grad_hidden = self._layer_backward(layer, batch, state.layers[layer], grad_hidden, grads)

        grads["indicator"] += grad_hidden[self.user_type][batch.seeds].sum(axis=0)
        self.item_vectors_backward(grad_hidden[self.item_type], state.item_cache, grads)
        for node_type, (e1, e2) in state.encoder_caches.items():
            grad_inner, dW, db = affine_backward(grad_hidden[node_type], e2)
            grads[f"enc.{node_type}.2.W"] += dW
            grads[f"enc.{node_type}.2.b"] += db
            _, dW, db = affine_backward(grad_inner, e1)
            grads[f"enc.{node_type}.1.W"] += dW
            grads[f"enc.{node_type}.1.b"] += db
        return grads

    def _layer_backward(
        self,
        layer: int,
        batch: SubgraphBatch,
        cache: LayerCache,
        grad_out: Dict[str, np.ndarray],
        grads: Params,
    ) -> Dict[str, np.ndarray]:
        grad_in = {t: np.zeros_like(h) for t, h in cache.inputs.items()}
        for node_type, grad in grad_out.items():
            if cache.relu:
                grad = grad * (cache.outputs[node_type] > 0)
            dx, dW, db = affine_backward(grad, cache.self_caches[node_type])
            grad_in[node_type] += dx
            grads[f"gnn.{layer}.self.{node_type}.W"] += dW
            grads[f"gnn.{layer}.self.{node_type}.b"] += db
            for edge_type, msg_cache in cache.msg_caches.items():
                if edge_type[2] != node_type:
                    continue
                edges = batch.edges[edge_type]
                grad_summed, dW, _ = affine_backward(grad, msg_cache)
                grads[f"gnn.{layer}.msg.{edge_key(edge_type)}.W"] += dW
                grad_src = segment_sum_backward(grad_summed, edges.dst)
                grad_in[edge_type[0]] += gather_backward(grad_src, edges.src, grad_in[edge_type[0]].shape[0])
        return grad_in

    # Readout and scoring -----------------------------------------------------------

    def embed_many(self, subgraphs: Sequence[Subgraph], graph: TemporalHeteroGraph) -> List[UserContext]:
        """One batched pass over ``subgraphs``; one UserContext per seed."""
        batch = collate(subgraphs)
        state = self.forward(batch, graph)
        items = batch.nodes[self.item_type]
        owners = batch.owner[self.item_type]
        item_hidden = state.hidden[self.item_type]
        contexts: List[UserContext] = []
        for member in range(batch.size):
            rows = np.flatnonzero(owners == member)
            order = rows[np.argsort(items[rows], kind="stable")]
            local_ids = items[order]
            contexts.append(
                UserContext(
                    user=int(batch.seed_users[member]),
                    seed_time=int(batch.seed_times[member]),
                    h_v=state.h_seed[member],
                    h_items={int(g): item_hidden[r] for g, r in zip(local_ids, order)},
                    offset=float(state.offset[member]),
                    local_ids=local_ids,
                )
            )
        return contexts

    def embed(self, sub: Subgraph, graph: TemporalHeteroGraph) -> UserContext:
        return self.embed_many([sub], graph)[0]

    def pair_scores(self, ctx: UserContext) -> Tuple[np.ndarray, np.ndarray]:
        """Pair-head scores ``h_v . h_w + offset`` of every local item, by ascending id."""
        ids = ctx.local_ids
        if ids.size == 0:
            return ids, np.zeros(0, dtype=ctx.h_v.dtype)
        stacked = np.stack([ctx.h_items[int(i)] for i in ids])
        return ids, stacked @ ctx.h_v + ctx.offset

    def score_all(
        self,
        ctx: UserContext,
        num_items: int,
        item_matrix: Optional[np.ndarray],
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Scores of every item under the merge rule, plus a per-item pair flag.

        Items without a score (non-local items of a pair-only model) get -inf.
        """
        is_pair = np.zeros(num_items, dtype=bool)
        if self.config.pair_only or item_matrix is None:
            scores = np.full(num_items, -np.inf)
        else:
            scores = inner_products(item_matrix, ctx.h_v)
        if not self.config.tower_only:
            ids, pair = self.pair_scores(ctx)
            scores[ids] = pair
            is_pair[ids] = True
        return scores, is_pair

    def score_candidates(
        self,
        ctx: UserContext,
        candidates: Sequence[int],
        graph: TemporalHeteroGraph,
    ) -> List[Tuple[int, float, str]]:
        ids = np.asarray(candidates, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= graph.num_items):
            raise UnknownItem(f"candidate outside [0, {graph.num_items})")
        matrix = None if self.config.pair_only else self.item_matrix(graph)
        scores, is_pair = self.score_all(ctx, graph.num_items, matrix)
        return [(int(i), float(scores[i]), PAIR if is_pair[i] else TOWER) for i in ids]
