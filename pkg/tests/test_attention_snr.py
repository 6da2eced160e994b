import math

import numpy as np
import pytest

from normlab.attention_snr import (
    SNR_CSV_HEADER,
    cross_covariance,
    damped_covariance,
    optimal_alignment_score,
    snr_compare,
    softmax_entropy,
    von_neumann_bound,
)
from normlab.decay import analytic_decay_trace, matched_balanced_trace
from normlab.errors import DegenerateInputError, InvalidInputError, RegimeError, ShapeError
from normlab.kinematics import ModalityPair, UpdateGeometry
from normlab.numerics import RngState, singular_values


def _traces():
    imb = analytic_decay_trace(ModalityPair(30.0), UpdateGeometry(0.3, math.pi / 2), 24, math.acos(0.9))
    return imb, matched_balanced_trace(imb)


def test_cross_covariance_examples():
    np.testing.assert_array_equal(cross_covariance([[1.0, 0.0]], [[1.0, 0.0]]), [[1.0, 0.0], [0.0, 0.0]])
    v = np.array([[0.0, 1.0], [0.0, -2.0]])
    u = np.array([[1.0, 0.0], [3.0, 0.0]])
    assert np.trace(cross_covariance(v, u)) == 0.0


def test_cross_covariance_entries_and_shape_errors(nprng):
    v, u = nprng.standard_normal((2, 50, 4))
    c = cross_covariance(v, u)
    assert c[1, 3] == pytest.approx(np.mean(v[:, 1] * u[:, 3]), abs=1e-15)
    with pytest.raises(ShapeError):
        cross_covariance(v, u[:10])
    with pytest.raises(ShapeError):
        cross_covariance(v[:, :3], u)


def test_cross_covariance_sampling_noise():
    d, n, theta = 8, 10_000, 0.7
    r = RngState(3)
    u = r.normal(n * d).reshape(n, d)
    u /= np.linalg.norm(u, axis=1)[:, None]
    # v = cos(theta) u + sin(theta) w with w orthogonal to u: C = cos(theta) I / d
    from normlab.numerics import sample_orthogonal_rows

    w = sample_orthogonal_rows(u, r)
    v = math.cos(theta) * u + math.sin(theta) * w
    err = np.linalg.norm(cross_covariance(v, u) - math.cos(theta) * np.eye(d) / d)
    assert err < 5.0 / math.sqrt(n)


def test_damped_examples(nprng):
    c = nprng.standard_normal((3, 3))
    np.testing.assert_array_equal(damped_covariance(c, 0.0), c)
    np.testing.assert_allclose(damped_covariance(c, math.pi / 3), c / 2, rtol=1e-15)
    with pytest.raises(RegimeError):
        damped_covariance(c, 2.0)


def test_damped_singular_values_scale(nprng):
    c = nprng.standard_normal((8, 8))
    dphi = 0.9
    np.testing.assert_allclose(
        singular_values(damped_covariance(c, dphi)), math.cos(dphi) * singular_values(c), atol=1e-10
    )


def test_bound_and_optimum_examples():
    assert von_neumann_bound(np.eye(2), 1.0) == pytest.approx(2.0, abs=1e-15)
    assert von_neumann_bound(np.diag([3.0, 0.0]), 2.0) == pytest.approx(6.0, abs=1e-15)
    s, w = optimal_alignment_score(np.diag([3.0, 0.0]), 2.0)
    assert s == pytest.approx(6.0, abs=1e-15)
    np.testing.assert_allclose(w, [[2.0, 0.0], [0.0, 0.0]])
    s, _ = optimal_alignment_score(np.eye(2), 1.0)
    assert s == pytest.approx(math.sqrt(2.0), abs=1e-15) and s < 2.0


def test_optimum_errors():
    with pytest.raises(DegenerateInputError):
        optimal_alignment_score(np.zeros((2, 2)), 1.0)
    with pytest.raises(InvalidInputError):
        optimal_alignment_score(np.eye(2), 0.0)
    with pytest.raises(InvalidInputError):
        von_neumann_bound(np.eye(2), -1.0)


def test_optimum_beats_random_search(nprng):
    c = nprng.standard_normal((8, 8))
    s, w = optimal_alignment_score(c, 1.0)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    assert s <= von_neumann_bound(c, 1.0) + 1e-9
    for _ in range(1000):
        x = nprng.standard_normal((8, 8))
        x /= np.linalg.norm(x)
        assert np.trace(x @ c) <= s + 1e-12


def test_dominance_random_matrices(nprng):
    for i in range(100):
        n = int(nprng.integers(2, 33))
        if i % 4 == 0:
            c = np.outer(nprng.standard_normal(n), nprng.standard_normal(n))
            s, _ = optimal_alignment_score(c, 1.5)
            assert abs(s - von_neumann_bound(c, 1.5)) < 1e-9 * max(1.0, s)
        else:
            c = nprng.standard_normal((n, n))
            s, _ = optimal_alignment_score(c, 1.5)
            assert s < von_neumann_bound(c, 1.5) - 1e-9


def test_softmax_entropy_limits():
    assert softmax_entropy(np.zeros(8)) == pytest.approx(math.log(8), abs=1e-15)
    assert softmax_entropy(np.array([1000.0, 0.0, 0.0])) == pytest.approx(0.0, abs=1e-12)


def test_snr_identical_traces_agree():
    imb, bal = _traces()
    a, b = snr_compare(bal, bal, 64, 1000, 32.0, RngState(1))
    assert a.lag_angle == 0.0
    assert a.s_rel_mean == b.s_rel_mean
    assert abs(a.gap - b.gap) < 3 * math.hypot(a.gap_se, b.gap_se)
    assert abs(a.softmax_entropy - b.softmax_entropy) < 3 * math.hypot(a.entropy_se, b.entropy_se)


def test_snr_imbalanced_collapse():
    imb, bal = _traces()
    ri, rb = snr_compare(imb, bal, 64, 1000, 32.0, RngState(2))
    assert ri.lag_angle > 0
    assert rb.gap - ri.gap > 3 * math.hypot(ri.gap_se, rb.gap_se)
    assert ri.softmax_entropy - rb.softmax_entropy > 3 * math.hypot(ri.entropy_se, rb.entropy_se)
    # noise floor unchanged
    assert abs(ri.s_irrel_mean - rb.s_irrel_mean) < 3 * math.hypot(ri.s_irrel_se, rb.s_irrel_se)


def test_snr_injected_sixty_degrees_halves_relevant_score():
    imb, bal = _traces()
    ri, rb = snr_compare(imb, bal, 64, 1000, 32.0, RngState(3), delta_phi=math.pi / 3)
    assert abs(ri.s_rel_mean - 0.5 * rb.s_rel_mean) < 3 * math.hypot(ri.s_rel_se, 0.5 * rb.s_rel_se)


def test_snr_irrelevant_scores_near_zero():
    d, n, r = 64, 1000, 32.0
    imb, bal = _traces()
    for rep in snr_compare(imb, bal, d, n, r, RngState(4)):
        # scores carry the scale of W, about r / sqrt(d) per unit cosine
        assert abs(rep.s_irrel_mean) / (r / math.sqrt(d)) < 3.0 / math.sqrt(d * n)


def test_snr_report_invariants():
    imb, bal = _traces()
    for rep in snr_compare(imb, bal, 32, 500, 4.0, RngState(5), n_keys=16):
        assert rep.gap == rep.s_rel_mean - rep.s_irrel_mean
        assert rep.achieved_optimum <= rep.bound + 1e-9
        assert 0.0 <= rep.softmax_entropy <= math.log(16)
        assert len(rep.row("x")) == len(SNR_CSV_HEADER)


def test_snr_preconditions():
    imb, bal = _traces()
    with pytest.raises(InvalidInputError):
        snr_compare(imb, bal, 64, 99, 1.0, RngState(0))
    with pytest.raises(InvalidInputError):
        snr_compare(imb, bal, 64, 100, 1.0, RngState(0), n_keys=1)
