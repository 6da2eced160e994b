"""Norm-alignment LayerNorm with global weight compensation.

Forward is a plain LayerNorm whose gain starts at ``T / sqrt(D)`` so that
outputs land at the text-embedding norm ``T``.  Such a small gain also
shrinks the gradient reaching the input; the compensated backward divides
the gradient at the normalised tensor by ``max(mean|g|, delta)`` to undo
that.  Parameter gradients are left alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySetError, InvalidInputError, ShapeError
from .numerics import as_matrix

DEFAULT_EPS = 1e-6
DEFAULT_DELTA = 1e-3
DEFAULT_THRESHOLD = 1e-6


@dataclass
class AlignLayer:
    g: np.ndarray
    beta: np.ndarray
    eps: float = DEFAULT_EPS
    delta: float = DEFAULT_DELTA
    compensation: bool = True

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.g.ndim != 1 or self.g.shape != self.beta.shape:
            raise ShapeError(f"g {self.g.shape} and beta {self.beta.shape} must be equal 1-D shapes")
        if not (self.eps > 0 and self.delta > 0):
            raise InvalidInputError("eps and delta must be > 0")

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def copy(self) -> "AlignLayer":
        return AlignLayer(self.g.copy(), self.beta.copy(), self.eps, self.delta, self.compensation)


@dataclass
class ForwardCache:
    x: np.ndarray
    x_hat: np.ndarray
    mu: np.ndarray
    var: np.ndarray


@dataclass
class EmbeddingStats:
    mean_norm: float
    std_norm: float
    top_k: list  # [(row, norm)], descending
    n_rows: int = 0


def row_norms(embedding) -> np.ndarray:
    return np.linalg.norm(as_matrix(embedding, "embedding"), axis=1)


def target_norm(embedding, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Mean L2 norm of the rows whose norm exceeds ``threshold`` (padding rows drop out)."""
    norms = row_norms(embedding)
    keep = norms[norms > threshold]
    if keep.size == 0:
        raise EmptySetError(f"no embedding row has norm above {threshold}")
    return float(np.mean(keep))


def init_align_layer(
    t: float, d: int, eps: float = DEFAULT_EPS, delta: float = DEFAULT_DELTA, compensation: bool = True
) -> AlignLayer:
    if not (t > 0 and d >= 1):
        raise InvalidInputError(f"need t > 0 and d >= 1, got t={t}, d={d}")
    return AlignLayer(np.full(d, t / math.sqrt(d)), np.zeros(d), eps, delta, compensation)


def align_forward(layer: AlignLayer, x):
    """LayerNorm over the last axis; ``x`` may be one token (D,) or a batch (N, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.dim:
        raise ShapeError(f"input width {x.shape[-1]} != layer width {layer.dim}")
    mu = x.mean(axis=-1, keepdims=True)
    var = np.mean(np.square(x - mu), axis=-1, keepdims=True)
    x_hat = (x - mu) / np.sqrt(var + layer.eps)
    y = x_hat * layer.g + layer.beta
    return y, ForwardCache(x, x_hat, mu, var)


def compensation_factor(g, delta: float = DEFAULT_DELTA) -> float:
    if not delta > 0:
        raise InvalidInputError("delta must be > 0")
    mu_g = float(np.mean(np.abs(np.asarray(g, dtype=np.float64))))
    return 1.0 / max(mu_g, delta)


def align_backward(layer: AlignLayer, cache: ForwardCache, grad_y):
    """Gradients w.r.t. (x, g, beta).  Batched inputs sum parameter grads over rows."""
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != cache.x_hat.shape:
        raise ShapeError(f"grad_y {grad_y.shape} != cache {cache.x_hat.shape}")
    x_hat = cache.x_hat
    lead = tuple(range(grad_y.ndim - 1))
    grad_beta = grad_y.sum(axis=lead) if lead else grad_y.copy()
    grad_g = (grad_y * x_hat).sum(axis=lead) if lead else grad_y * x_hat

    dxh = grad_y * layer.g
    inv_std = 1.0 / np.sqrt(cache.var + layer.eps)
    grad_x = inv_std * (
        dxh
        - dxh.mean(axis=-1, keepdims=True)
        - x_hat * np.mean(dxh * x_hat, axis=-1, keepdims=True)
    )
    if layer.compensation:
        # the normalisation Jacobian is linear, so scaling after it equals
        # scaling the gradient at x_hat, with a single rounding step
        grad_x = grad_x * compensation_factor(layer.g, layer.delta)
    return grad_x, grad_g, grad_beta


def embedding_norm_stats(embedding, top_k: int = 10) -> EmbeddingStats:
    """Mean and population std of row norms plus the ``top_k`` largest rows.

    Ties in norm are broken by row index.
    """
    a = np.asarray(embedding, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0:
        raise EmptySetError("embedding has no rows")
    norms = row_norms(a)
    order = np.lexsort((np.arange(norms.size), -norms))[: max(0, int(top_k))]
    return EmbeddingStats(
        mean_norm=float(np.mean(norms)),
        std_norm=float(np.std(norms)),
        top_k=[(int(i), float(norms[i])) for i in order],
        n_rows=int(norms.size),
    )
