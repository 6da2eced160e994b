"""Miniature retrieval task showing the vanishing-gradient dilemma.

A text query must pick its paired visual key out of ``n_keys`` candidates.
Raw visual features pass through a trainable linear "encoder", an optional
alignment LayerNorm, and are scored by dot product with the query.  Every
gradient is written out by hand; training is plain gradient descent.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .norm_align import AlignLayer, align_backward, align_forward
from .numerics import RngState, sample_orthogonal_rows
from .prenorm_stack import (
    DYNAMICS_CSV_HEADER,
    TEXT,
    VISUAL,
    DynamicsTrace,
    HiddenBatch,
    StackConfig,
    simulate,
)

CHECKPOINT_FRACTIONS = (0.0, 0.25, 0.5, 1.0)
TRAIN_CSV_HEADER = ("step", "loss", "encoder_grad_norm")
CHECKPOINT_CSV_HEADER = ("checkpoint",) + DYNAMICS_CSV_HEADER


@dataclass(frozen=True)
class FusionTaskConfig:
    d: int = 64
    n_keys: int = 8
    n_examples: int = 2048
    vis_scale: float = 30.0
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 8
    eval_every: int = 16
    eval_examples: int = 512
    key_angle: float = math.pi / 4
    align: Optional[AlignLayer] = None
    seed: int = 0
    probe_tokens: int = 32
    probe_depth: int = 8
    probe_c: float = 0.5

    def __post_init__(self):
        if self.n_keys < 2:
            raise ConfigError("n_keys must be >= 2")
        if not self.vis_scale > 0:
            raise ConfigError("vis_scale must be > 0")
        if self.d < 8:
            raise ConfigError("d must be >= 8")
        if min(self.n_examples, self.batch_size, self.eval_every, self.eval_examples) < 1:
            raise ConfigError("n_examples, batch_size, eval_every, eval_examples must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.align is not None and self.align.dim != self.d:
            raise ConfigError(f"align layer width {self.align.dim} != d {self.d}")

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.n_examples / self.batch_size)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


@dataclass
class FusionDataset:
    keys: np.ndarray  # (n, n_keys, d) raw visual features
    queries: np.ndarray  # (n, d), unit norm
    labels: np.ndarray  # (n,)
    mixing: np.ndarray  # (d, d) orthogonal map from query space to raw visual space


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    encoder_grad_norms: list = field(default_factory=list)
    eval_steps: list = field(default_factory=list)  # steps taken before each accuracy reading
    accuracies: list = field(default_factory=list)  # eval-subset accuracy at eval_steps
    checkpoints: dict = field(default_factory=dict)  # fraction -> DynamicsTrace
    initial_accuracy: float = 0.0
    final_accuracy: float = 0.0
    failed: bool = False
    failure: str = ""
    encoder: Optional[np.ndarray] = None  # final parameters
    align: Optional[AlignLayer] = None

    def steps_to_accuracy(self, target: float) -> int:
        """First evaluated step count reaching ``target``; ``total steps + 1`` if never."""
        for s, a in zip(self.eval_steps, self.accuracies):
            if a >= target:
                return s
        return len(self.losses) + 1

    def rows(self):
        return [(i, l, g) for i, (l, g) in enumerate(zip(self.losses, self.encoder_grad_norms))]

    def checkpoint_rows(self):
        return [(f,) + row for f in sorted(self.checkpoints) for row in self.checkpoints[f].csv_rows()]

    def grad_norm_variance(self) -> float:
        return float(np.var(self.encoder_grad_norms)) if self.encoder_grad_norms else 0.0

    def checkpoint_gap(self, fraction: float) -> float:
        """Text minus visual inter-layer cosine, averaged over the probe stack's layers."""
        return -float(np.mean(self.checkpoints[fraction].cos_gap()))


def make_fusion_dataset(config: FusionTaskConfig, rng: RngState) -> FusionDataset:
    """Queries are uniform unit vectors; the labelled key is the query's direction
    turned by ``key_angle`` and carried into raw visual space by a fixed random
    orthogonal map, scaled to ``vis_scale``.  Distractor keys are uniform.
    """
    n, k, d = config.n_examples, config.n_keys, config.d
    g = rng.normal(d * d).reshape(d, d)
    qm, r = np.linalg.qr(g)
    mixing = qm * np.sign(np.diag(r))
    q = rng.normal(n * d).reshape(n, d)
    q /= np.linalg.norm(q, axis=1)[:, None]
    labels = np.minimum((rng.uniform(n) * k).astype(np.int64), k - 1)
    keys = rng.normal(n * k * d).reshape(n, k, d)
    keys /= np.linalg.norm(keys, axis=2)[:, :, None]
    w = sample_orthogonal_rows(q, rng)
    keys[np.arange(n), labels] = math.cos(config.key_angle) * q + math.sin(config.key_angle) * w
    keys = keys @ mixing.T * config.vis_scale
    return FusionDataset(keys, q, labels, mixing)


class _Model:
    def __init__(self, d: int, align: Optional[AlignLayer]):
        self.encoder = np.eye(d)
        self.align = align.copy() if align is not None else None

    def keys(self, raw):
        z = raw @ self.encoder.T
        if self.align is None:
            return z, None
        return align_forward(self.align, z)

    def scores(self, raw, q):
        k, cache = self.keys(raw)
        return np.einsum("bd,bkd->bk", q, k), cache

    def accuracy(self, ds: FusionDataset, n: int | None = None) -> float:
        sl = slice(None) if n is None else slice(0, n)
        s, _ = self.scores(ds.keys[sl], ds.queries[sl])
        return float(np.mean(np.argmax(s, axis=1) == ds.labels[sl]))

    def loss_and_grads(self, raw, q, labels):
        s, cache = self.scores(raw, q)
        s = s - s.max(axis=1, keepdims=True)
        logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
        b = raw.shape[0]
        loss = -float(np.mean(logp[np.arange(b), labels]))
        ds = np.exp(logp)
        ds[np.arange(b), labels] -= 1.0
        ds /= b
        dk = ds[:, :, None] * q[:, None, :]
        grads = {}
        if self.align is None:
            dz = dk
        else:
            dz, grads["g"], grads["beta"] = align_backward(self.align, cache, dk)
        grads["encoder"] = np.einsum("bki,bkj->ij", dz, raw)
        return loss, grads

    def step(self, grads, lr):
        self.encoder -= lr * grads["encoder"]
        if self.align is not None:
            self.align.g = self.align.g - lr * grads["g"]
            self.align.beta = self.align.beta - lr * grads["beta"]


def _probe(model: _Model, ds: FusionDataset, config: FusionTaskConfig) -> DynamicsTrace:
    """Pre-Norm stylized stack over (aligned key, query) pairs from the dataset."""
    m = min(config.probe_tokens, ds.keys.shape[0])
    idx = np.arange(m)
    vis, _ = model.keys(ds.keys[idx, ds.labels[idx]])
    states = np.vstack([vis, ds.queries[idx]])
    modality = np.array([VISUAL] * m + [TEXT] * m)
    pair = np.concatenate([m + idx, idx])
    cfg = StackConfig(
        depth=config.probe_depth, d=config.d, n_vis=m, n_txt=m, c=config.probe_c, seed=config.seed
    )
    # fixed probe stream: every checkpoint sees the same update directions
    return simulate(HiddenBatch(states, modality, pair), cfg, RngState(config.seed).spawn(99))


def train_run(config: FusionTaskConfig) -> TrainReport:
    rng = RngState(config.seed)
    ds = make_fusion_dataset(config, rng.spawn(0))
    order_rng = rng.spawn(1)
    model = _Model(config.d, config.align)
    report = TrainReport(initial_accuracy=model.accuracy(ds))
    report.eval_steps.append(0)
    report.accuracies.append(model.accuracy(ds, config.eval_examples))
    total = config.total_steps
    marks = {round(f * total): f for f in CHECKPOINT_FRACTIONS}
    if 0 in marks:
        report.checkpoints[marks[0]] = _probe(model, ds, config)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        _train_loop(config, ds, model, report, marks, order_rng)
    report.encoder = model.encoder.copy()
    report.align = model.align.copy() if model.align is not None else None
    return report


def _train_loop(config, ds, model, report, marks, order_rng) -> None:
    total = config.total_steps
    step = 0
    for _ in range(config.epochs):
        perm = np.argsort(order_rng.uniform(config.n_examples), kind="stable")
        for lo in range(0, config.n_examples, config.batch_size):
            b = np.sort(perm[lo : lo + config.batch_size])  # order-free batch sums
            loss, grads = model.loss_and_grads(ds.keys[b], ds.queries[b], ds.labels[b])
            gnorm = float(np.linalg.norm(grads["encoder"]))
            report.losses.append(loss)
            report.encoder_grad_norms.append(gnorm)
            if not (math.isfinite(loss) and math.isfinite(gnorm)):
                report.failed = True
                report.failure = f"non-finite loss or gradient at step {step}"
                report.final_accuracy = float("nan")
                return
            model.step(grads, config.learning_rate)
            step += 1
            if step % config.eval_every == 0 or step == total:
                report.eval_steps.append(step)
                report.accuracies.append(model.accuracy(ds, config.eval_examples))
            if step in marks:
                report.checkpoints[marks[step]] = _probe(model, ds, config)
    report.final_accuracy = model.accuracy(ds)


def encoder_grad_ratio(a: TrainReport, b: TrainReport, step: int) -> float:
    """``|grad E|_a / |grad E|_b`` at ``step``."""
    if not (0 <= step < len(a.encoder_grad_norms) and step < len(b.encoder_grad_norms)):
        raise IndexError(f"step {step} missing from a report")
    return a.encoder_grad_norms[step] / b.encoder_grad_norms[step]


def config_hash(config: FusionTaskConfig) -> str:
    """Digest of every field except the seed."""
    fields = asdict(replace(config, align=None, seed=0))
    h = hashlib.sha256(repr(sorted(fields.items())).encode())
    if config.align is not None:
        a = config.align
        h.update(a.g.tobytes() + a.beta.tobytes())
        h.update(repr((a.eps, a.delta, a.compensation)).encode())
    return h.hexdigest()[:16]


def train_seeds(config: FusionTaskConfig, seeds, max_workers: int = 1) -> dict:
    """Independent runs per seed, keyed by ``(config_hash, seed)``."""
    configs = [replace(config, seed=int(s)) for s in seeds]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers) as ex:
            reports = list(ex.map(train_run, configs))
    else:
        reports = [train_run(c) for c in configs]
    key = config_hash(config)
    return {(key, c.seed): r for c, r in zip(configs, reports)}


def with_align(config: FusionTaskConfig, align: Optional[AlignLayer], **changes) -> FusionTaskConfig:
    return replace(config, align=align, **changes)
