"""Attention-score consequences of a lag angle.

A relevant key that lags by ``dphi`` keeps only ``cos(dphi)`` of its
correlation with the query, so every singular value of the query/key
cross-covariance shrinks by that factor.  With the projection capped at
``|W|_F <= R`` the best achievable score is ``R |C|_F`` and Von Neumann's
trace inequality caps it by ``R * sum(sigma_i(C))``.  Irrelevant keys stay
near-orthogonal, so the relevant/irrelevant gap shrinks and the softmax
over a key set flattens.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decay import DecayTrace
from .errors import DegenerateInputError, InvalidInputError, RegimeError, ShapeError
from .numerics import (
    RngState,
    as_matrix,
    frobenius_norm,
    sample_orthogonal_rows,
    singular_values,
)

SNR_CSV_HEADER = (
    "scenario",
    "lag_angle",
    "s_rel_mean",
    "s_rel_se",
    "s_irrel_mean",
    "s_irrel_se",
    "gap",
    "gap_se",
    "softmax_entropy",
    "entropy_se",
    "bound",
    "achieved_optimum",
)


@dataclass
class SnrReport:
    s_rel_mean: float
    s_irrel_mean: float
    gap: float
    softmax_entropy: float
    bound: float
    achieved_optimum: float
    s_rel_se: float = 0.0
    s_irrel_se: float = 0.0
    gap_se: float = 0.0
    entropy_se: float = 0.0
    lag_angle: float = 0.0
    n_keys: int = 0

    def row(self, scenario: str):
        return (scenario,) + tuple(getattr(self, k) for k in SNR_CSV_HEADER[1:])


def cross_covariance(v_samples, u_samples) -> np.ndarray:
    """``E[v u^T]`` as the sample mean of outer products."""
    v = np.atleast_2d(np.asarray(v_samples, dtype=np.float64))
    u = np.atleast_2d(np.asarray(u_samples, dtype=np.float64))
    if v.shape != u.shape:
        raise ShapeError(f"sample arrays differ: {v.shape} vs {u.shape}")
    if v.shape[0] < 1:
        raise ShapeError("need at least one sample pair")
    return v.T @ u / v.shape[0]


def damped_covariance(c_bal, delta_phi: float) -> np.ndarray:
    if not 0.0 <= delta_phi <= 0.5 * math.pi:
        raise RegimeError(f"delta_phi must lie in [0, pi/2], got {delta_phi}")
    return math.cos(delta_phi) * as_matrix(c_bal)


def von_neumann_bound(c, r: float) -> float:
    """``r * sum(sigma_i(c))``: no W with ``|W|_F <= r`` scores above this."""
    if not r > 0.0:
        raise InvalidInputError("r must be > 0")
    return r * float(np.sum(singular_values(c)))


def optimal_alignment_score(c, r: float):
    """Maximiser of ``trace(W c)`` over the Frobenius ball of radius ``r``."""
    c = as_matrix(c)
    if not r > 0.0:
        raise InvalidInputError("r must be > 0")
    fn = frobenius_norm(c)
    if fn == 0.0:
        raise DegenerateInputError("zero covariance has no preferred direction")
    w = r * c.T / fn
    return float(np.trace(w @ c)), w


def softmax_entropy(scores: np.ndarray) -> np.ndarray:
    """Entropy (nats) of softmax along the last axis."""
    z = scores - scores.max(axis=-1, keepdims=True)
    logp = z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    return -np.sum(np.exp(logp) * logp, axis=-1)


def _mean_se(x: np.ndarray):
    x = x.ravel()
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def snr_compare(
    imbalanced: DecayTrace,
    balanced: DecayTrace,
    d: int,
    n_pairs: int,
    r: float,
    rng: RngState,
    n_keys: int = 64,
    delta_phi: float | None = None,
):
    """Score relevant and irrelevant keys for both scenarios under one fixed W.

    Queries ``u`` are uniform unit vectors.  Balanced relevant keys sit at the
    balanced trace's final angle from their query.  Imbalanced relevant keys
    are ``cos(dphi) v_bal + sin(dphi) v_perp`` with ``v_perp`` orthogonal to
    both ``u`` and ``v_bal``, where ``dphi`` is the final lag angle (or the
    injected ``delta_phi``).  Each query also meets ``n_keys - 1`` fresh
    uniform irrelevant keys.  ``W`` is the Frobenius-optimal matrix for the
    balanced cross-covariance and is reused for the imbalanced scenario.

    Returns ``(imbalanced_report, balanced_report)``.
    """
    if len(imbalanced) == 0 or len(balanced) == 0:
        raise ShapeError("traces must be non-empty")
    if n_pairs < 100:
        raise InvalidInputError("n_pairs must be >= 100")
    if n_keys < 2:
        raise InvalidInputError("n_keys must be >= 2")
    theta_bal = balanced.final_angle
    if delta_phi is None:
        delta_phi = imbalanced.final_angle - theta_bal
    delta_phi = float(delta_phi)

    u = rng.normal(n_pairs * d).reshape(n_pairs, d)
    u /= np.linalg.norm(u, axis=1)[:, None]
    w1 = sample_orthogonal_rows(u, rng)
    v_bal = math.cos(theta_bal) * u + math.sin(theta_bal) * w1
    # v_perp: orthogonal to u and v_bal, i.e. to u and w1
    z = rng.normal(n_pairs * d).reshape(n_pairs, d)
    for _ in range(2):
        z -= np.einsum("ij,ij->i", z, u)[:, None] * u
        z -= np.einsum("ij,ij->i", z, w1)[:, None] * w1
    z /= np.linalg.norm(z, axis=1)[:, None]
    v_imb = math.cos(delta_phi) * v_bal + math.sin(delta_phi) * z

    c_bal = cross_covariance(v_bal, u)
    _, w = optimal_alignment_score(c_bal, r)

    reports = []
    for v_rel, lag in ((v_imb, delta_phi), (v_bal, 0.0)):
        irr = rng.normal(n_pairs * (n_keys - 1) * d).reshape(n_pairs, n_keys - 1, d)
        irr /= np.linalg.norm(irr, axis=2)[:, :, None]
        uw = u @ w  # score(u, k) = u^T W k
        s_rel = np.einsum("ij,ij->i", uw, v_rel)
        s_irr = np.einsum("ij,ikj->ik", uw, irr)
        ent = softmax_entropy(np.concatenate([s_rel[:, None], s_irr], axis=1))
        rel_m, rel_se = _mean_se(s_rel)
        irr_m, irr_se = _mean_se(s_irr)
        ent_m, ent_se = _mean_se(ent)
        c_sc = cross_covariance(v_rel, u)
        reports.append(
            SnrReport(
                s_rel_mean=rel_m,
                s_irrel_mean=irr_m,
                gap=rel_m - irr_m,
                softmax_entropy=ent_m,
                bound=von_neumann_bound(c_sc, r),
                achieved_optimum=float(np.trace(w @ c_sc)),
                s_rel_se=rel_se,
                s_irrel_se=irr_se,
                gap_se=math.hypot(rel_se, irr_se),
                entropy_se=ent_se,
                lag_angle=lag,
                n_keys=n_keys,
            )
        )
    return reports[0], reports[1]
