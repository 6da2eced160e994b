"""Deterministic numeric substrate: seeded streams, sphere sampling,
singular values, finite differences and the MATF32 matrix format.

Vectors and matrices are plain float64 ``numpy`` arrays.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._backend import kernels
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    InputDataError,
    InvalidInputError,
    NumericError,
)

RNG_ALGORITHM = "splitmix64-counter/polar-box-muller/v1"
MASK64 = (1 << 64) - 1
DEGENERATE_RESIDUAL = 1e-8
SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 64
SVD_MAX_DIM = 512
MATF32_MAGIC = b"MATF32\x00\x00"


def as_vector(x, name="x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def as_matrix(m, name="m") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has NaN/Inf entries")
    return a


@dataclass
class RngState:
    """Counter-based random stream.

    Draw ``i`` is ``splitmix64_mix(seed + (i + 1) * 0x9E3779B97F4A7C15)``,
    i.e. the SplitMix64 sequence addressed by counter.  Gaussians use the
    polar form of Box-Muller on consecutive draw pairs.  The stream depends
    only on ``(seed, counter)``, never on the platform generator.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed)
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    algorithm = RNG_ALGORITHM

    def next_u64(self, n: int) -> np.ndarray:
        out = kernels.u64_block(np.uint64(self.seed), np.uint64(self.counter), int(n))
        self.counter += int(n)
        return out

    def draw_key(self) -> int:
        return int(self.next_u64(1)[0])

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) with 53 random bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        out, ctr = kernels.normal_fill(np.uint64(self.seed), np.uint64(self.counter), int(n))
        self.counter = int(ctr)
        return out

    def spawn(self, index: int) -> "RngState":
        """Independent child stream; does not advance this one."""
        return RngState(int(kernels.stream_key(np.uint64(self.seed), np.uint64(index))))


def sample_unit_vector(d: int, rng: RngState) -> np.ndarray:
    """Uniform direction on the unit sphere in R^d."""
    if d < 1:
        raise DimensionError("dimension must be >= 1")
    while True:
        z = rng.normal(d)
        n = np.linalg.norm(z)
        if n > 0.0:
            return z / n


def sample_orthogonal_unit(h, rng: RngState) -> np.ndarray:
    """Uniform unit vector on the (D-1)-sphere orthogonal to ``h``."""
    h = as_vector(h, "h")
    if h.size < 2:
        raise DimensionError("orthogonal complement is empty for D=1")
    hn = np.linalg.norm(h)
    if hn == 0.0:
        raise DegenerateInputError("h is the zero vector")
    hh = h / hn
    while True:
        u = rng.normal(h.size)
        u -= (u @ hh) * hh
        r = np.linalg.norm(u)
        if r < DEGENERATE_RESIDUAL:
            continue
        u /= r
        # second Gram-Schmidt pass keeps dot(u, h) at round-off level
        u -= (u @ hh) * hh
        return u / np.linalg.norm(u)


def sample_orthogonal_rows(h: np.ndarray, rng: RngState) -> np.ndarray:
    """Row-wise ``sample_orthogonal_unit`` for a (N, D) batch, one draw per row."""
    h = np.asarray(h, dtype=np.float64)
    n, d = h.shape
    if d < 2:
        raise DimensionError("orthogonal complement is empty for D=1")
    hn = np.linalg.norm(h, axis=1)
    if np.any(hn == 0.0):
        raise DegenerateInputError("zero row in h")
    hh = h / hn[:, None]
    u = rng.normal(n * d).reshape(n, d)
    u -= np.einsum("ij,ij->i", u, hh)[:, None] * hh
    r = np.linalg.norm(u, axis=1)
    for i in np.nonzero(r < DEGENERATE_RESIDUAL)[0]:
        u[i] = sample_orthogonal_unit(h[i], rng)
        r[i] = 1.0
    u /= r[:, None]
    u -= np.einsum("ij,ij->i", u, hh)[:, None] * hh
    return u / np.linalg.norm(u, axis=1)[:, None]


def singular_values(m) -> np.ndarray:
    """Singular values in descending order, by one-sided Jacobi.

    Sweeps rotate column pairs until every pair is orthogonal to a relative
    tolerance of 1e-12 (at most 64 sweeps).  Returns ``min(rows, cols)`` values.
    """
    a = as_matrix(m)
    if max(a.shape) > SVD_MAX_DIM:
        raise DimensionError(f"matrix {a.shape} exceeds the {SVD_MAX_DIM} desk-scale guard")
    if a.shape[1] > a.shape[0]:
        a = a.T
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    norms, sweeps, converged = kernels.jacobi_singular_values(a, SVD_TOL, SVD_MAX_SWEEPS)
    if not converged:
        raise ConvergenceError(f"Jacobi SVD did not converge in {sweeps} sweeps")
    return np.sort(np.asarray(norms))[::-1]


def frobenius_norm(m) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=np.float64)))))


def central_difference_gradient(f: Callable[[np.ndarray], float], x, step=None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    ``step`` defaults to ``max(1e-6, 1e-6 * |x_i|)`` per component; a scalar
    applies the same step everywhere.
    """
    x = as_vector(x)
    if step is None:
        steps = np.maximum(1e-6, 1e-6 * np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=np.float64), x.shape)
        if np.any(steps <= 0):
            raise InvalidInputError("step must be positive")
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value while differencing component {i}")
        grad[i] = (fp - fm) / (2.0 * steps[i])
    return grad


def write_matf32(path, m) -> None:
    a = np.ascontiguousarray(as_matrix(m), dtype="<f4")
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(MATF32_MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(a.tobytes(order="C"))


def read_matf32(path) -> np.ndarray:
    """Load a MATF32 file, widening to float64."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputDataError(f"cannot read matrix file {path}: {exc}") from exc
    if len(raw) < 24 or raw[:8] != MATF32_MAGIC:
        raise InputDataError(f"{path}: not a MATF32 file (bad magic)")
    rows, cols = struct.unpack("<QQ", raw[8:24])
    expected = 24 + 4 * rows * cols
    if rows == 0 or cols == 0 or len(raw) != expected:
        raise InputDataError(f"{path}: header says {rows}x{cols} but payload is {len(raw) - 24} bytes")
    a = np.frombuffer(raw, dtype="<f4", offset=24).reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise InputDataError(f"{path}: non-finite entries")
    return a
