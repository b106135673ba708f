"""Centralized configuration for paths, training hyperparameters and threads."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import InvalidConfig


BASE_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = BASE_DIR / "data"

MODEL_DIR = BASE_DIR / "artifacts"
CHECKPOINT_PATH = MODEL_DIR / "ctxgnn.ckpt"
GRAPH_CACHE_PATH = MODEL_DIR / "graph.joblib"

THREADS_ENV = "CTXGNN_THREADS"

ITEM_ENCODER_MODES = ("transductive_shallow", "inductive_feature")
PRECISIONS = ("float32", "float64")
DEFAULT_FANOUT = 12


def ensure_model_dir() -> None:
    """Create artifact folder if missing."""
    MODEL_DIR.mkdir(parents=True, exist_ok=True)


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    fanouts: Tuple[int, ...] = (DEFAULT_FANOUT, DEFAULT_FANOUT)
    classes_C: int = 4096
    batch_size: int = 256
    lr: float = 0.01
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    item_encoder_mode: str = "transductive_shallow"
    precision: str = "float32"
    pair_only: bool = False
    tower_only: bool = False
    fusion_hidden: int = 32
    eval_batch_size: int = 256
    pipeline: bool = False

    def __post_init__(self) -> None:
        if self.hidden_dim < 1 or self.fusion_hidden < 1:
            raise InvalidConfig("hidden_dim and fusion_hidden must be >= 1")
        if self.num_layers < 1:
            raise InvalidConfig("num_layers must be >= 1")
        if len(self.fanouts) != self.num_layers:
            raise InvalidConfig(
                f"fanouts has {len(self.fanouts)} entries but num_layers={self.num_layers}"
            )
        if any(f < 1 for f in self.fanouts):
            raise InvalidConfig("fanouts must be positive")
        if self.classes_C < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise InvalidConfig("classes_C, batch_size and eval_batch_size must be >= 1")
        if self.lr < 0:
            raise InvalidConfig("lr must be >= 0")
        if self.max_epochs < 0 or self.patience < 1:
            raise InvalidConfig("max_epochs must be >= 0 and patience >= 1")
        if self.item_encoder_mode not in ITEM_ENCODER_MODES:
            raise InvalidConfig(f"item_encoder_mode must be one of {ITEM_ENCODER_MODES}")
        if self.precision not in PRECISIONS:
            raise InvalidConfig(f"precision must be one of {PRECISIONS}")
        if self.pair_only and self.tower_only:
            raise InvalidConfig("pair_only and tower_only are mutually exclusive")

    def with_overrides(self, **overrides: object) -> "TrainConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(name: str, kind: type, text: str) -> object:
    if name == "fanouts":
        return tuple(int(part) for part in text.split(",") if part.strip())
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text.strip()


_FIELD_TYPES: Dict[str, type] = {
    "hidden_dim": int,
    "num_layers": int,
    "fanouts": tuple,
    "classes_C": int,
    "batch_size": int,
    "lr": float,
    "max_epochs": int,
    "patience": int,
    "seed": int,
    "item_encoder_mode": str,
    "precision": str,
    "pair_only": bool,
    "tower_only": bool,
    "fusion_hidden": int,
    "eval_batch_size": int,
    "pipeline": bool,
}


def parse_config_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    """Parse flat ``key=value`` lines on top of ``base`` (defaults if omitted)."""
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, _FIELD_TYPES[key], value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {exc}") from exc
    base = base or TrainConfig()
    # whichever of num_layers and fanouts is given alone determines the other
    if "fanouts" in values and "num_layers" not in values:
        values["num_layers"] = len(values["fanouts"])  # type: ignore[arg-type]
    elif "num_layers" in values and "fanouts" not in values:
        layers = int(values["num_layers"])  # type: ignore[arg-type]
        values["fanouts"] = (DEFAULT_FANOUT,) * max(layers, 0)
    return replace(base, **values)


def load_config(path: Path) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def dump_config(config: TrainConfig) -> str:
    lines = []
    for field in fields(config):
        value = getattr(config, field.name)
        if field.name == "fanouts":
            value = ",".join(str(f) for f in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{field.name}={value}")
    return "\n".join(lines) + "\n"


def config_to_dict(config: TrainConfig) -> Dict[str, object]:
    data = asdict(config)
    data["fanouts"] = list(config.fanouts)
    return data


def config_from_dict(data: Dict[str, object]) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    values = dict(data)
    if "fanouts" in values:
        values["fanouts"] = tuple(int(f) for f in values["fanouts"])  # type: ignore[union-attr]
    return TrainConfig(**values)  # type: ignore[arg-type]


def eval_threads() -> int:
    """Evaluation parallelism cap taken from ``CTXGNN_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError as exc:
        raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise InvalidConfig(f"{THREADS_ENV} must be >= 1")
    return threads
