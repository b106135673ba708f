"""Dense numeric primitives with exact reverse-mode gradients, plus Adam.

The primitive set is closed: affine (optionally followed by ReLU), gather,
segment_sum, row-wise dot products and softmax cross-entropy. Layers compose
their backward passes by hand from these; ``grad_check`` is the safety net.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import logsumexp, softmax

from .errors import (
    IndexOutOfRange,
    NumericalError,
    ShapeMismatch,
    TargetMasked,
    TargetOutOfRange,
)

Params = Dict[str, np.ndarray]


@dataclass
class AffineCache:
    x: np.ndarray
    W: np.ndarray
    out: np.ndarray
    relu: bool
    vector_input: bool
    has_bias: bool


def affine(
    x: np.ndarray,
    W: np.ndarray,
    b: Optional[np.ndarray] = None,
    relu: bool = False,
) -> Tuple[np.ndarray, AffineCache]:
    """``x @ W + b`` broadcast over rows, optionally followed by ReLU."""
    vector_input = x.ndim == 1
    x2 = x.reshape(1, -1) if vector_input else x
    if x2.ndim != 2 or W.ndim != 2 or x2.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"affine: x{tuple(x.shape)} @ W{tuple(W.shape)}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeMismatch(f"affine: bias {tuple(b.shape)} for W{tuple(W.shape)}")
    out = x2 @ W
    if b is not None:
        out = out + b
    if relu:
        out = np.maximum(out, 0.0)
    cache = AffineCache(x=x2, W=W, out=out, relu=relu, vector_input=vector_input, has_bias=b is not None)
    return (out[0] if vector_input else out), cache


def affine_backward(
    grad_out: np.ndarray,
    cache: AffineCache,
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    grad = grad_out.reshape(cache.out.shape)
    if cache.relu:
        grad = grad * (cache.out > 0)
    grad_x = grad @ cache.W.T
    grad_W = cache.x.T @ grad
    grad_b = grad.sum(axis=0) if cache.has_bias else None
    if cache.vector_input:
        grad_x = grad_x[0]
    return grad_x, grad_W, grad_b


def _segment_matrix(segment_of: np.ndarray, num_segments: int, dtype: np.dtype) -> sparse.csr_matrix:
    m = segment_of.shape[0]
    return sparse.csr_matrix(
        (np.ones(m, dtype=dtype), (segment_of, np.arange(m))),
        shape=(num_segments, m),
    )


def segment_sum(values: np.ndarray, segment_of: Sequence[int], num_segments: int) -> np.ndarray:
    """Row sums grouped by segment id; unused segments stay zero."""
    index = np.asarray(segment_of, dtype=np.int64)
    if values.ndim != 2 or index.shape != (values.shape[0],):
        raise ShapeMismatch(f"segment_sum: values{tuple(values.shape)} with {index.shape[0]} segment ids")
    if index.size and (index.min() < 0 or index.max() >= num_segments):
        raise IndexOutOfRange(f"segment id outside [0, {num_segments})")
    if index.size == 0:
        return np.zeros((num_segments, values.shape[1]), dtype=values.dtype)
    out = _segment_matrix(index, num_segments, values.dtype) @ values
    return np.asarray(out, dtype=values.dtype)


def segment_sum_backward(grad_out: np.ndarray, segment_of: Sequence[int]) -> np.ndarray:
    return grad_out[np.asarray(segment_of, dtype=np.int64)]


def gather(values: np.ndarray, index: Sequence[int]) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= values.shape[0]):
        raise IndexOutOfRange(f"gather index outside [0, {values.shape[0]})")
    return values[idx]


def gather_backward(grad_out: np.ndarray, index: Sequence[int], num_rows: int) -> np.ndarray:
    return segment_sum(grad_out, index, num_rows)


def row_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"row_dot: {tuple(a.shape)} vs {tuple(b.shape)}")
    return np.einsum("ij,ij->i", a, b)


def inner_products(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """``matrix @ query`` in 64-bit; every ranking path scores through here."""
    if matrix.ndim != 2 or query.shape != (matrix.shape[1],):
        raise ShapeMismatch(f"inner_products: {tuple(matrix.shape)} @ {tuple(query.shape)}")
    return np.asarray(matrix @ query, dtype=np.float64)


def softmax_xent(logits: np.ndarray, target: Sequence[int]) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over rows; ``-inf`` entries carry zero probability."""
    target = np.asarray(target, dtype=np.int64)
    n, num_classes = logits.shape
    if target.shape != (n,):
        raise ShapeMismatch(f"softmax_xent: {n} rows but {target.shape[0]} targets")
    if n == 0:
        return 0.0, np.zeros_like(logits)
    if target.min() < 0 or target.max() >= num_classes:
        raise TargetOutOfRange(f"target outside [0, {num_classes})")
    picked = logits[np.arange(n), target]
    if not np.all(np.isfinite(picked)):
        raise TargetMasked("a target logit is masked (-inf)")
    norm = logsumexp(logits, axis=1)
    loss = float(np.mean(norm - picked))
    grad = softmax(logits, axis=1)
    grad[np.arange(n), target] -= 1.0
    grad /= n
    return loss, grad


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> Tuple[Params, AdamState]:
    """One bias-corrected Adam update of every parameter, in place."""
    for name, grad in grads.items():
        if name not in params or params[name].shape != grad.shape:
            raise ShapeMismatch(f"adam_step: gradient for {name!r} does not match its parameter")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for {name!r}")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name in sorted(params):
        param = params[name]
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param)
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return params, state


def grad_check(
    fn: Callable[[Params], Tuple[float, Mapping[str, np.ndarray]]],
    params: Params,
    h: float = 1e-5,
    names: Optional[Sequence[str]] = None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``fn`` maps the parameter dict to ``(loss, grads)``; it must be pure.
    Error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    _, analytic = fn(params)
    worst = 0.0
    for name in names if names is not None else sorted(params):
        param = params[name]
        grad = analytic.get(name)
        grad = np.zeros_like(param) if grad is None else grad
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus, _ = fn(params)
            flat[i] = original - h
            minus, _ = fn(params)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            error = abs(float(flat_grad[i]) - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)
    return worst


def dtype_of(precision: str) -> np.dtype:
    return np.dtype(np.float64 if precision == "float64" else np.float32)


def uniform_init(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...], dtype: np.dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def normal_init(rng: np.random.Generator, std: float, shape: Tuple[int, ...], dtype: np.dtype) -> np.ndarray:
    return (rng.standard_normal(size=shape) * std).astype(dtype)
