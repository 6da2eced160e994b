"""Cross-modal similarity decay under rotational residual updates.

Per block, each modality turns by its effective angle and the expected
cosine between a visual and a text state is multiplied by the retention
factor ``gamma = cos(theta_vis) cos(theta_txt)``.  For a fixed product of
tangents ``gamma`` peaks when the two angles are equal, so norm imbalance
speeds the decay; the extra accumulated angle is the lag angle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import DimensionError, InvalidInputError, RegimeError, ShapeError
from .kinematics import (
    ModalityPair,
    UpdateGeometry,
    effective_rotation_angle,
    next_norm,
)
from .numerics import RngState

HALF_PI = 0.5 * math.pi
TRACE_CSV_HEADER = (
    "layer",
    "theta_vis",
    "theta_txt",
    "gamma",
    "expected_cos",
    "empirical_cos",
    "empirical_se",
    "lag_angle",
)


@dataclass
class DecayRecord:
    """State at ``layer``; angles and gamma describe the block that produced it.

    Layer 0 is the initial state (no block: angles 0, gamma 1).
    """

    layer: int
    theta_vis: float
    theta_txt: float
    gamma: float
    expected_cos: float
    empirical_cos: float | None = None
    empirical_se: float | None = None
    lag_angle: float | None = None


@dataclass
class DecayTrace:
    records: list[DecayRecord] = field(default_factory=list)
    bias: list[float] | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=np.float64,
        )

    @property
    def expected_cos(self) -> np.ndarray:
        return self.column("expected_cos")

    @property
    def gammas(self) -> np.ndarray:
        return self.column("gamma")[1:]

    @property
    def final_angle(self) -> float:
        return math.acos(min(1.0, max(-1.0, self.records[-1].expected_cos)))

    def attach_lag(self, lag) -> None:
        for r, v in zip(self.records, lag):
            r.lag_angle = float(v)

    def rows(self):
        for r in self.records:
            yield tuple(getattr(r, name) for name in TRACE_CSV_HEADER)


def retention_factor(theta_vis: float, theta_txt: float) -> float:
    for t in (theta_vis, theta_txt):
        if not (0.0 <= t < HALF_PI):
            raise RegimeError(f"rotation angle {t} outside [0, pi/2)")
    return math.cos(theta_vis) * math.cos(theta_txt)


def expected_similarity_trace(cos0: float, gammas: Sequence[float]) -> np.ndarray:
    """``cos0 * prod(gammas[:l])`` for l = 0..len(gammas)."""
    if not -1.0 <= cos0 <= 1.0:
        raise InvalidInputError(f"cos0 must lie in [-1, 1], got {cos0}")
    out = np.empty(len(gammas) + 1)
    out[0] = cos0
    for i, g in enumerate(gammas):
        if not 0.0 < g <= 1.0:
            raise InvalidInputError(f"gamma must lie in (0, 1], got {g}")
        out[i + 1] = out[i] * g
    return out


def trace_from_gammas(cos0: float, gammas: Sequence[float]) -> DecayTrace:
    """Trace with known per-layer retention and no angle bookkeeping (angles NaN)."""
    cos = expected_similarity_trace(cos0, gammas)
    recs = [DecayRecord(0, 0.0, 0.0, 1.0, float(cos[0]))]
    recs += [
        DecayRecord(l, math.nan, math.nan, float(g), float(c))
        for l, (g, c) in enumerate(zip(gammas, cos[1:]), start=1)
    ]
    return DecayTrace(recs)


def _per_layer(geom, layers: int) -> list[UpdateGeometry]:
    if isinstance(geom, UpdateGeometry):
        return [geom] * layers
    geoms = list(geom)
    if len(geoms) != layers:
        raise ShapeError(f"{len(geoms)} per-layer geometries for {layers} layers")
    return geoms


def analytic_decay_trace(
    pair: ModalityPair, geom, layers: int, initial_angle: float
) -> DecayTrace:
    """Expected-cosine trace with norms evolved deterministically block by block.

    ``geom`` is one ``UpdateGeometry`` shared by every layer or a per-layer list.
    """
    geoms = _per_layer(geom, layers)
    nv, nt = pair.vis_norm, pair.txt_norm
    recs = [DecayRecord(0, 0.0, 0.0, 1.0, math.cos(initial_angle))]
    cos_l = recs[0].expected_cos
    for l, g in enumerate(geoms, start=1):
        tv = effective_rotation_angle(nv, g)
        tt = effective_rotation_angle(nt, g)
        gamma = retention_factor(tv, tt)
        cos_l = gamma * cos_l
        recs.append(DecayRecord(l, tv, tt, gamma, cos_l))
        nv, nt = next_norm(nv, g), next_norm(nt, g)
    return DecayTrace(recs)


def matched_balanced_trace(imbalanced: DecayTrace) -> DecayTrace:
    """Balanced counterpart with the same per-layer product of tangents.

    Each layer gets ``tan(theta) = sqrt(tan(theta_vis) tan(theta_txt))`` for
    both modalities, i.e. the same geometric-mean angular velocity.
    """
    recs = [replace(imbalanced.records[0], empirical_cos=None, empirical_se=None, lag_angle=None)]
    cos_l = recs[0].expected_cos
    for r in imbalanced.records[1:]:
        t = math.atan(math.sqrt(math.tan(r.theta_vis) * math.tan(r.theta_txt)))
        gamma = retention_factor(t, t)
        cos_l = gamma * cos_l
        recs.append(DecayRecord(r.layer, t, t, gamma, cos_l))
    return DecayTrace(recs)


def matched_balanced_geometry(pair: ModalityPair, geom: UpdateGeometry):
    """(k=1 pair, geometry) whose first-block angle is the geometric-mean one.

    Solves ``c sin(phi) / (n + c cos(phi)) = t`` for ``c`` at the text norm.
    """
    tv = math.tan(effective_rotation_angle(pair.vis_norm, geom))
    tt = math.tan(effective_rotation_angle(pair.txt_norm, geom))
    t = math.sqrt(tv * tt)
    den = math.sin(geom.phi) - t * math.cos(geom.phi)
    if den <= 0.0:
        raise RegimeError("no update magnitude reaches the matched angle at this phi")
    c = pair.base_norm * t / den
    return ModalityPair(1.0, pair.base_norm), UpdateGeometry(c, geom.phi)


def monte_carlo_decay(
    pair: ModalityPair,
    geom,
    layers: int,
    initial_angle: float,
    d: int,
    n_samples: int,
    rng: RngState,
) -> DecayTrace:
    """Simulate ``n_samples`` independent (vis, txt) pairs through ``layers`` blocks.

    Pairs start at ``initial_angle`` with norms ``(k base, base)``.  Every block
    applies a polar update with a fresh uniform rotation direction per token.
    By rotational invariance the start frame is fixed (text on e0, visual in
    the e0-e1 plane).  Records the empirical mean cosine and its standard
    error next to the analytic expectation.
    """
    if d < 8:
        raise DimensionError("monte_carlo_decay needs d >= 8")
    if n_samples < 1000:
        raise InvalidInputError("monte_carlo_decay needs n_samples >= 1000")
    geoms = _per_layer(geom, layers)
    if len({g.phi for g in geoms}) > 1:
        raise InvalidInputError("monte_carlo_decay takes a single phi across layers")
    trace = analytic_decay_trace(pair, geoms, layers, initial_angle)
    phi = geoms[0].phi if geoms else 0.0
    cs = np.array([g.c for g in geoms], dtype=np.float64)
    key = np.uint64(rng.draw_key())
    cos = kernels.mc_decay(
        key, int(n_samples), int(d), float(pair.vis_norm), float(pair.txt_norm), cs, float(phi),
        float(initial_angle),
    )
    # reduce along a contiguous axis so numpy sums pairwise in a fixed order
    per_layer = np.ascontiguousarray(cos.T)
    mean = per_layer.mean(axis=1)
    se = per_layer.std(axis=1, ddof=1) / math.sqrt(n_samples)
    for r, m, s in zip(trace.records, mean, se):
        r.empirical_cos = float(m)
        r.empirical_se = float(s)
    trace.bias = [float(m - r.expected_cos) for r, m in zip(trace.records, mean)]
    return trace


def asymmetry_decay_scan(tan_product: float, n_grid: int, span: float = 30.0):
    """Retention factor along the curve ``tan(t1) tan(t2) = tan_product``.

    ``tan(t1)`` runs log-uniformly over ``sqrt(P) * span**[-1, 1]`` and
    ``tan(t2)`` mirrors it, so with odd ``n_grid`` the middle row is the
    symmetric point.  Returns rows ``(theta1, theta2, gamma)``.
    """
    if not tan_product > 0.0:
        raise InvalidInputError("tan_product must be > 0")
    if n_grid < 3:
        raise InvalidInputError("n_grid must be >= 3")
    root = math.sqrt(tan_product)
    rows = []
    for x in np.linspace(-1.0, 1.0, n_grid):
        t1 = root * span ** float(x)
        t2 = root * span ** float(-x)
        if not (math.isfinite(t1) and math.isfinite(t2)):
            raise RegimeError("grid point at or beyond pi/2")
        th1, th2 = math.atan(t1), math.atan(t2)
        retention_factor(th1, th2)  # regime check
        # cos(atan t) = 1/sqrt(1 + t^2); the tangent form avoids a cos round trip
        rows.append((th1, th2, 1.0 / math.sqrt((1.0 + t1 * t1) * (1.0 + t2 * t2))))
    return rows


def lag_angle_trace(imbalanced: DecayTrace, balanced: DecayTrace) -> np.ndarray:
    """``arccos(E cos_imb) - arccos(E cos_bal)`` layer by layer."""
    if len(imbalanced) != len(balanced):
        raise ShapeError(f"trace lengths differ: {len(imbalanced)} vs {len(balanced)}")
    ci = imbalanced.expected_cos
    cb = balanced.expected_cos
    if np.any(ci <= -1.0) or np.any(cb <= -1.0) or np.any(ci > 1.0) or np.any(cb > 1.0):
        raise InvalidInputError("expected_cos must lie in (-1, 1]")
    return np.arccos(ci) - np.arccos(cb)
