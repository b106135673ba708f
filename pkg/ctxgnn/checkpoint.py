"""Binary checkpoint format for model parameters and the training config.

Layout (all integers little-endian)::

    b"CGN1" | u32 version | u32 len | config JSON
    u32 tensor count
    per tensor: u16 len | name | u8 dtype code | u8 ndim | u64 dims...
    raw tensor bytes, in manifest order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Dict, List, Tuple

import numpy as np

from .config import TrainConfig, config_from_dict, config_to_dict
from .errors import BadMagic, ShapeMismatch, TruncatedFile, VersionMismatch
from .graph import TemporalHeteroGraph
from .model import ContextGNN, ModelConfig, ModelParams, init_params

MAGIC = b"CGN1"
FORMAT_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}


def save_checkpoint(params: ModelParams, config: TrainConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode("utf-8")
    names = params.names()
    with path.open("wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        handle.write(blob)
        handle.write(struct.pack("<I", len(names)))
        for name in names:
            tensor = params[name]
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<BB", _CODES[tensor.dtype], tensor.ndim))
            handle.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        for name in names:
            tensor = params[name]
            handle.write(np.ascontiguousarray(tensor, dtype=tensor.dtype.newbyteorder("<")).tobytes())


def _read(handle: BinaryIO, size: int) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise TruncatedFile(f"expected {size} bytes, found {len(data)}")
    return data


def _unpack(handle: BinaryIO, fmt: str) -> Tuple[int, ...]:
    return struct.unpack(fmt, _read(handle, struct.calcsize(fmt)))


def load_checkpoint(path: Path) -> Tuple[ModelParams, TrainConfig]:
    with Path(path).open("rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagic(f"{path}: not a checkpoint (magic {magic!r})")
        version, blob_len = _unpack(handle, "<II")
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        blob = _read(handle, blob_len)
        try:
            data = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadMagic(f"{path}: config header is not valid JSON") from exc
        if not isinstance(data, dict):
            raise BadMagic(f"{path}: config header is not a JSON object")
        config = config_from_dict(data)
        (count,) = _unpack(handle, "<I")
        manifest: List[Tuple[str, np.dtype, Tuple[int, ...]]] = []
        for _ in range(count):
            (name_len,) = _unpack(handle, "<H")
            name = _read(handle, name_len).decode("utf-8")
            code, ndim = _unpack(handle, "<BB")
            if code not in _DTYPES:
                raise VersionMismatch(f"{path}: unknown dtype code {code} for {name!r}")
            shape = _unpack(handle, f"<{ndim}Q") if ndim else ()
            manifest.append((name, _DTYPES[code], tuple(int(s) for s in shape)))
        tensors: Dict[str, np.ndarray] = {}
        for name, dtype, shape in manifest:
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            array = np.frombuffer(_read(handle, size), dtype=dtype).reshape(shape)
            tensors[name] = array.astype(dtype.newbyteorder("="))
    return ModelParams(tensors=tensors), config


def restore_model(path: Path, graph: TemporalHeteroGraph) -> Tuple[ContextGNN, TrainConfig]:
    """Load a checkpoint and check its tensors against what ``graph`` requires."""
    params, config = load_checkpoint(path)
    model_config = ModelConfig.from_train_config(config)
    expected = init_params(graph, model_config, seed=config.seed)
    if expected.names() != params.names():
        raise ShapeMismatch(f"{path}: parameter names do not match this graph's schema")
    for name in expected.names():
        if expected[name].shape != params[name].shape:
            raise ShapeMismatch(f"{path}: {name} has shape {params[name].shape}, graph needs {expected[name].shape}")
    return ContextGNN(model_config, params, graph.schema), config
