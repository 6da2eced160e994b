"""Polar view of residual updates and the effective rotation angle.

A residual update ``delta`` of magnitude ``c`` at angle ``phi`` to the
hidden state ``h`` turns ``h`` by ``theta`` with

    tan(theta) = c sin(phi) / (|h| + c cos(phi))

so a larger ``|h|`` turns more slowly under the same update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, InvalidInputError, PoleError
from .numerics import RngState, as_vector, sample_orthogonal_unit


@dataclass(frozen=True)
class UpdateGeometry:
    c: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 0.0):
            raise InvalidInputError(f"update magnitude c must be >= 0, got {self.c}")
        if not (0.0 <= self.phi <= math.pi):
            raise InvalidInputError(f"phi must lie in [0, pi], got {self.phi}")


@dataclass(frozen=True)
class ModalityPair:
    """Visual/text norm ratio ``k`` and the text norm; ``k == 1`` is balanced."""

    k: float
    base_norm: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 1.0):
            raise InvalidInputError(f"norm ratio k must be >= 1, got {self.k}")
        if not (math.isfinite(self.base_norm) and self.base_norm > 0.0):
            raise InvalidInputError(f"base_norm must be > 0, got {self.base_norm}")

    @property
    def vis_norm(self) -> float:
        return self.k * self.base_norm

    @property
    def txt_norm(self) -> float:
        return self.base_norm


def decompose_update(h, delta):
    """Split ``delta`` into its signed length along ``h`` and the orthogonal rest."""
    h = as_vector(h, "h")
    delta = as_vector(delta, "delta")
    if h.shape != delta.shape:
        raise DimensionError(f"h {h.shape} and delta {delta.shape} differ")
    hn = np.linalg.norm(h)
    if hn == 0.0:
        raise DegenerateInputError("h is the zero vector")
    par = float(delta @ h) / hn
    return par, delta - (par / hn) * h


def _check_pole(h_norm: float, geom: UpdateGeometry) -> float:
    den = h_norm + geom.c * math.cos(geom.phi)
    if den <= 0.0:
        raise PoleError(
            f"|h| + c cos(phi) = {den:.6g} <= 0: rotation exceeds pi/2; reduce c or phi"
        )
    return den


def effective_rotation_tangent(h_norm: float, geom: UpdateGeometry) -> float:
    if not h_norm > 0.0:
        raise DegenerateInputError(f"h_norm must be > 0, got {h_norm}")
    den = _check_pole(h_norm, geom)
    return geom.c * math.sin(geom.phi) / den


def effective_rotation_angle(h_norm: float, geom: UpdateGeometry) -> float:
    return math.atan(effective_rotation_tangent(h_norm, geom))


def next_norm(h_norm: float, geom: UpdateGeometry) -> float:
    """|h + delta| -- deterministic, since only the rotation direction is random."""
    c = geom.c
    return math.sqrt(h_norm * h_norm + 2.0 * h_norm * c * math.cos(geom.phi) + c * c)


def apply_polar_update(h, geom: UpdateGeometry, rng: RngState) -> np.ndarray:
    """``h + c (cos(phi) h/|h| + sin(phi) u)`` with ``u`` uniform and orthogonal to ``h``."""
    h = as_vector(h, "h")
    if h.size < 2:
        raise DimensionError("polar updates need D >= 2")
    hn = np.linalg.norm(h)
    if hn == 0.0:
        raise DegenerateInputError("h is the zero vector")
    _check_pole(hn, geom)
    u = sample_orthogonal_unit(h, rng)
    delta = geom.c * (math.cos(geom.phi) * (h / hn) + math.sin(geom.phi) * u)
    return h + delta


def measured_rotation(h, h_next) -> float:
    """Angle between two vectors via atan2(|orthogonal part|, parallel part)."""
    h = as_vector(h, "h")
    h_next = as_vector(h_next, "h_next")
    hn = np.linalg.norm(h)
    if hn == 0.0 or np.linalg.norm(h_next) == 0.0:
        raise DegenerateInputError("zero vector has no direction")
    e = h / hn
    par = float(h_next @ e)
    orth = np.linalg.norm(h_next - par * e)
    return math.atan2(orth, par)


def velocity_asymmetry(pair: ModalityPair, geom: UpdateGeometry) -> tuple[float, float]:
    """Effective rotation angles (vis, txt) under a shared update geometry."""
    # k == 1 gives vis_norm == txt_norm bit for bit, hence identical angles
    return effective_rotation_angle(pair.vis_norm, geom), effective_rotation_angle(pair.txt_norm, geom)
