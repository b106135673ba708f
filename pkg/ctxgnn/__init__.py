"""Context-aware GNN recommender for temporal heterogeneous graphs."""

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .config import TrainConfig, load_config
from .data_loader import load_dataset
from .evaluation import EvalReport, evaluate_split, locality_score
from .graph import GraphSchema, TaskSpec, TemporalHeteroGraph, build_graph
from .model import ContextGNN, ModelConfig
from .serving import ScoredRanking, recommend_topk
from .synth import SynthConfig, generate_synthetic
from .trainer import TrainReport, Trainer, fit

__all__ = [
    "ContextGNN",
    "EvalReport",
    "GraphSchema",
    "ModelConfig",
    "ScoredRanking",
    "SynthConfig",
    "TaskSpec",
    "TemporalHeteroGraph",
    "TrainConfig",
    "TrainReport",
    "Trainer",
    "build_graph",
    "evaluate_split",
    "fit",
    "generate_synthetic",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "locality_score",
    "recommend_topk",
    "restore_model",
    "save_checkpoint",
]
