"""Toy two-modality transformer stack (Pre-Norm and Post-Norm).

``stylized`` blocks add an update of fixed magnitude ``c`` at angle ``phi``
to every token, which is exactly the setting of the kinematics module.
``attention`` blocks run single-head softmax attention and a ReLU MLP with
fixed random weights.  ``run_stack`` records per-layer, per-modality mean
L2 norms and the cosine between each token's state before and after the
block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError
from .norm_align import AlignLayer, align_forward
from .numerics import RngState, sample_orthogonal_rows, sample_unit_vector

VISUAL = 0
TEXT = 1
MODALITY_NAMES = {VISUAL: "visual", TEXT: "text"}
NORM_EPS = 1e-6
DYNAMICS_CSV_HEADER = (
    "layer",
    "modality",
    "mean_norm",
    "std_norm",
    "mean_interlayer_cos",
    "std_interlayer_cos",
)


@dataclass
class HiddenBatch:
    states: np.ndarray  # (N, D)
    modality: np.ndarray  # (N,) VISUAL / TEXT
    pair_index: np.ndarray  # (N,) partner row or -1

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.modality = np.asarray(self.modality, dtype=np.int64)
        self.pair_index = np.asarray(self.pair_index, dtype=np.int64)
        n = self.states.shape[0]
        if self.states.ndim != 2 or n < 2:
            raise ShapeError("HiddenBatch needs an (N >= 2, D) state matrix")
        if self.modality.shape != (n,) or self.pair_index.shape != (n,):
            raise ShapeError("modality and pair_index must have one entry per token")
        if not (np.any(self.modality == VISUAL) and np.any(self.modality == TEXT)):
            raise ShapeError("HiddenBatch needs at least one token of each modality")
        if not np.all(np.isfinite(self.states)):
            raise ShapeError("HiddenBatch states must be finite")

    def with_states(self, states: np.ndarray) -> "HiddenBatch":
        return HiddenBatch(states, self.modality, self.pair_index)

    @property
    def d(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class StackConfig:
    depth: int = 24
    d: int = 64
    n_vis: int = 32
    n_txt: int = 32
    k: float = 30.0
    base_norm: float = 1.0
    initial_angle: float = math.pi / 3
    norm_kind: str = "layer"
    arch: str = "pre"
    sublayer_mode: str = "stylized"
    c: float = 1.0
    phi: float = math.pi / 2
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.depth < 0:
            problems.append("depth must be >= 0")
        if self.d < 8:
            problems.append("d must be >= 8")
        if self.n_vis < 1 or self.n_txt < 1:
            problems.append("need at least one token per modality")
        if not self.k >= 1.0:
            problems.append("k must be >= 1")
        if not self.base_norm > 0.0:
            problems.append("base_norm must be > 0")
        if self.norm_kind not in ("layer", "rms"):
            problems.append(f"norm_kind must be 'layer' or 'rms', got {self.norm_kind!r}")
        if self.arch not in ("pre", "post"):
            problems.append(f"arch must be 'pre' or 'post', got {self.arch!r}")
        if self.sublayer_mode not in ("stylized", "attention"):
            problems.append(f"sublayer_mode must be 'stylized' or 'attention', got {self.sublayer_mode!r}")
        if not self.c >= 0.0:
            problems.append("c must be >= 0")
        if not 0.0 <= self.phi <= math.pi:
            problems.append("phi must lie in [0, pi]")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def init_block_weights(d: int, rng: RngState, hidden_mult: int = 4) -> BlockWeights:
    """Gaussian weights with std 1/sqrt(fan_in)."""
    h = hidden_mult * d

    def mat(rows, cols):
        return rng.normal(rows * cols).reshape(rows, cols) / math.sqrt(rows)

    return BlockWeights(mat(d, d), mat(d, d), mat(d, d), mat(d, d), mat(d, h), mat(h, d))


def zero_block_weights(d: int, hidden_mult: int = 4) -> BlockWeights:
    z = np.zeros((d, d))
    return BlockWeights(z, z, z, z, np.zeros((d, hidden_mult * d)), np.zeros((hidden_mult * d, d)))


@dataclass
class DynamicsRecord:
    layer: int
    modality: str
    mean_norm: float
    std_norm: float
    mean_interlayer_cos: float = math.nan
    std_interlayer_cos: float = math.nan

    def row(self):
        return tuple(getattr(self, k) for k in DYNAMICS_CSV_HEADER)


@dataclass
class DynamicsTrace:
    records: list[DynamicsRecord] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return max((r.layer for r in self.records), default=0)

    def get(self, layer: int, modality: str) -> DynamicsRecord:
        for r in self.records:
            if r.layer == layer and r.modality == modality:
                return r
        raise KeyError((layer, modality))

    def series(self, modality: str, name: str, start: int = 0) -> np.ndarray:
        return np.array(
            [getattr(r, name) for r in self.records if r.modality == modality and r.layer >= start]
        )

    def cos_gap(self) -> np.ndarray:
        """Visual minus text mean inter-layer cosine for layers 1..L."""
        return self.series("visual", "mean_interlayer_cos", 1) - self.series(
            "text", "mean_interlayer_cos", 1
        )

    def csv_rows(self):
        """Rows for layers 1..L; layer 0 carries no inter-layer cosine."""
        return [r.row() for r in self.records if r.layer >= 1]


# --- normalisation -------------------------------------------------------


def layer_norm_fn(x, g=None, beta=None, eps: float = NORM_EPS) -> np.ndarray:
    """``(x - mean) / sqrt(var + eps) * g + beta`` over the last axis (population variance)."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = np.mean(np.square(x - mu), axis=-1, keepdims=True)
    out = (x - mu) / np.sqrt(var + eps)
    if g is not None:
        out = out * np.asarray(g, dtype=np.float64)
    if beta is not None:
        out = out + np.asarray(beta, dtype=np.float64)
    return out


def rms_norm_fn(x, g=None, eps: float = NORM_EPS) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = x / np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + eps)
    if g is not None:
        out = out * np.asarray(g, dtype=np.float64)
    return out


def _norm(x: np.ndarray, kind: str) -> np.ndarray:
    return layer_norm_fn(x) if kind == "layer" else rms_norm_fn(x)


# --- batches and sublayers -----------------------------------------------


def init_batch(config: StackConfig, rng: RngState) -> HiddenBatch:
    """Text tokens at ``base_norm``, visual at ``k * base_norm``.

    The first ``min(n_vis, n_txt)`` visual tokens are paired with the text
    token of the same rank and sit at ``initial_angle`` from it.  Rows are
    ordered visual first.
    """
    d = config.d
    n_pair = min(config.n_vis, config.n_txt)
    txt = np.stack([sample_unit_vector(d, rng) for _ in range(config.n_txt)])
    vis = np.empty((config.n_vis, d))
    if n_pair:
        w = sample_orthogonal_rows(txt[:n_pair], rng)
        vis[:n_pair] = math.cos(config.initial_angle) * txt[:n_pair] + math.sin(config.initial_angle) * w
    for i in range(n_pair, config.n_vis):
        vis[i] = sample_unit_vector(d, rng)
    vis /= np.linalg.norm(vis, axis=1)[:, None]
    states = np.vstack([vis * (config.k * config.base_norm), txt * config.base_norm])
    modality = np.array([VISUAL] * config.n_vis + [TEXT] * config.n_txt)
    pair_index = np.full(config.n_vis + config.n_txt, -1)
    pair_index[:n_pair] = config.n_vis + np.arange(n_pair)
    pair_index[config.n_vis : config.n_vis + n_pair] = np.arange(n_pair)
    return HiddenBatch(states, modality, pair_index)


def stylized_update(states: np.ndarray, c: float, phi: float, rng: RngState) -> np.ndarray:
    """Per-token update of magnitude ``c`` at angle ``phi`` with a uniform orthogonal direction."""
    hn = np.linalg.norm(states, axis=1)
    if np.any(hn == 0.0):
        raise DegenerateInputError("zero hidden state has no direction")
    u = sample_orthogonal_rows(states, rng)
    return c * (math.cos(phi) * states / hn[:, None] + math.sin(phi) * u)


def attention_sublayer(x: np.ndarray, w: BlockWeights) -> np.ndarray:
    q, k, v = x @ w.wq, x @ w.wk, x @ w.wv
    s = q @ k.T / math.sqrt(x.shape[1])
    s -= s.max(axis=1, keepdims=True)
    a = np.exp(s)
    a /= a.sum(axis=1, keepdims=True)
    return a @ v @ w.wo


def ffn_sublayer(x: np.ndarray, w: BlockWeights) -> np.ndarray:
    return np.maximum(x @ w.w1, 0.0) @ w.w2


def _check_weights(h: HiddenBatch, weights: Optional[BlockWeights], config: StackConfig):
    if h.d != config.d:
        raise ShapeError(f"batch width {h.d} != config d {config.d}")
    if config.sublayer_mode == "attention":
        if weights is None or weights.wq.shape != (config.d, config.d):
            raise ShapeError("attention mode needs BlockWeights sized for d")


def prenorm_block(
    h: HiddenBatch, weights: Optional[BlockWeights], config: StackConfig, rng: Optional[RngState] = None
) -> HiddenBatch:
    """``h + Sublayer(Norm(h))`` (attention then MLP in attention mode)."""
    _check_weights(h, weights, config)
    x = h.states
    if config.sublayer_mode == "stylized":
        # the update's size and angle are fixed by construction, so Norm(h)
        # only matters through the direction it leaves unchanged
        return h.with_states(x + stylized_update(x, config.c, config.phi, rng))
    x = x + attention_sublayer(_norm(x, config.norm_kind), weights)
    x = x + ffn_sublayer(_norm(x, config.norm_kind), weights)
    return h.with_states(x)


def postnorm_block(
    h: HiddenBatch, weights: Optional[BlockWeights], config: StackConfig, rng: Optional[RngState] = None
) -> HiddenBatch:
    """``Norm(h + Sublayer(h))``."""
    _check_weights(h, weights, config)
    x = h.states
    if config.sublayer_mode == "stylized":
        return h.with_states(_norm(x + stylized_update(x, config.c, config.phi, rng), config.norm_kind))
    x = _norm(x + attention_sublayer(x, weights), config.norm_kind)
    x = _norm(x + ffn_sublayer(x, weights), config.norm_kind)
    return h.with_states(x)


# --- diagnostics ---------------------------------------------------------


def _token_cos(prev: HiddenBatch, nxt: HiddenBatch) -> np.ndarray:
    if prev.states.shape != nxt.states.shape or not np.array_equal(prev.modality, nxt.modality):
        raise ShapeError("batches differ in shape or modality tags")
    a = np.linalg.norm(prev.states, axis=1)
    b = np.linalg.norm(nxt.states, axis=1)
    if np.any(a == 0.0) or np.any(b == 0.0):
        raise DegenerateInputError("zero-norm token")
    return np.clip(np.einsum("ij,ij->i", prev.states, nxt.states) / (a * b), -1.0, 1.0)


def interlayer_similarity(prev: HiddenBatch, nxt: HiddenBatch) -> tuple[float, float]:
    """Per-modality mean of cos(prev_i, next_i): (visual, text)."""
    cos = _token_cos(prev, nxt)
    return float(cos[prev.modality == VISUAL].mean()), float(cos[prev.modality == TEXT].mean())


def _records(layer: int, batch: HiddenBatch, cos: Optional[np.ndarray]):
    norms = np.linalg.norm(batch.states, axis=1)
    out = []
    for code in (VISUAL, TEXT):
        m = batch.modality == code
        rec = DynamicsRecord(layer, MODALITY_NAMES[code], float(norms[m].mean()), float(norms[m].std()))
        if cos is not None:
            rec.mean_interlayer_cos = float(cos[m].mean())
            rec.std_interlayer_cos = float(cos[m].std())
        out.append(rec)
    return out


def apply_align(batch: HiddenBatch, align: AlignLayer) -> HiddenBatch:
    """Pass the visual tokens through the alignment layer; text is untouched."""
    states = batch.states.copy()
    vis = batch.modality == VISUAL
    states[vis], _ = align_forward(align, states[vis])
    return batch.with_states(states)


def simulate(
    batch: HiddenBatch, config: StackConfig, rng: RngState, align: Optional[AlignLayer] = None
) -> DynamicsTrace:
    """Run ``config.depth`` blocks from ``batch`` and record the dynamics.

    Block weights come from ``rng.spawn(1)`` and update directions from
    ``rng.spawn(2)``, so runs with and without ``align`` see the same draws.
    """
    if align is not None:
        batch = apply_align(batch, align)
    w_rng, u_rng = rng.spawn(1), rng.spawn(2)
    block = prenorm_block if config.arch == "pre" else postnorm_block
    trace = DynamicsTrace(_records(0, batch, None))
    for layer in range(1, config.depth + 1):
        weights = init_block_weights(config.d, w_rng) if config.sublayer_mode == "attention" else None
        nxt = block(batch, weights, config, u_rng)
        trace.records.extend(_records(layer, nxt, _token_cos(batch, nxt)))
        batch = nxt
    return trace


def run_stack(config: StackConfig, align: Optional[AlignLayer] = None) -> DynamicsTrace:
    """Seeded end-to-end run: ``init_batch`` then ``simulate``."""
    rng = RngState(config.seed)
    return simulate(init_batch(config, rng.spawn(0)), config, rng, align)
