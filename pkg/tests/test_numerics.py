import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normlab.errors import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    InputDataError,
    InvalidInputError,
    NumericError,
)
from normlab.numerics import (
    MATF32_MAGIC,
    RngState,
    central_difference_gradient,
    frobenius_norm,
    read_matf32,
    sample_orthogonal_rows,
    sample_orthogonal_unit,
    sample_unit_vector,
    singular_values,
    write_matf32,
)

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_ref(seed, i):
    """Plain-integer SplitMix64 draw ``i`` (0-based)."""
    z = (seed + (i + 1) * GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def polar_ref(seed, n):
    """Polar Box-Muller over the reference stream, consuming draws in pairs."""
    out, i = [], 0
    while len(out) < n:
        a, b = splitmix64_ref(seed, i), splitmix64_ref(seed, i + 1)
        i += 2
        x = (a >> 11) * 2.0**-52 - 1.0
        y = (b >> 11) * 2.0**-52 - 1.0
        s = x * x + y * y
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            out += [x * f, y * f]
    return np.array(out[:n]), i


# --- RNG ---------------------------------------------------------------------


def test_u64_stream_matches_reference_splitmix64():
    r = RngState(0)
    got = [int(v) for v in r.next_u64(5)]
    assert got == [splitmix64_ref(0, i) for i in range(5)]
    # published first output of SplitMix64 from state 0
    assert got[0] == 0xE220A8397B1DCDAF


def test_counter_addressing_is_stateless():
    a = RngState(99)
    a.next_u64(7)
    tail = a.next_u64(3)
    b = RngState(99, counter=7)
    assert np.array_equal(tail, b.next_u64(3))


def test_normals_match_reference_polar_method():
    r = RngState(7)
    got = r.normal(101)
    ref, used = polar_ref(7, 101)
    np.testing.assert_allclose(got, ref, rtol=1e-14, atol=1e-15)
    assert r.counter == used


def test_identical_seeds_identical_streams():
    a, b = RngState(5), RngState(5)
    assert np.array_equal(a.normal(1000), b.normal(1000))
    assert np.array_equal(a.uniform(50), b.uniform(50))
    assert not np.array_equal(RngState(5).normal(10), RngState(6).normal(10))


def test_spawn_independent_and_does_not_advance():
    r = RngState(3)
    c1, c2 = r.spawn(1), r.spawn(2)
    assert r.counter == 0
    assert c1.seed != c2.seed
    assert r.spawn(1).seed == c1.seed


def test_uniform_range_and_normal_moments():
    r = RngState(11)
    u = r.uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = r.normal(200_000)
    se = 1.0 / math.sqrt(z.size)
    assert abs(z.mean()) < 4 * se
    assert abs(z.var() - 1.0) < 4 * math.sqrt(2.0) * se


def test_seed_range_checked():
    with pytest.raises(ValueError):
        RngState(-1)
    with pytest.raises(ValueError):
        RngState(1 << 64)


# --- sphere sampling ---------------------------------------------------------


def test_unit_vector_d1_is_sign():
    for seed in range(10):
        v = sample_unit_vector(1, RngState(seed))
        assert v.shape == (1,) and abs(v[0]) == 1.0


def test_unit_vector_norm():
    v = sample_unit_vector(64, RngState(7))
    assert abs(np.linalg.norm(v) - 1.0) < 1e-12


def test_unit_vector_dimension_error():
    with pytest.raises(DimensionError):
        sample_unit_vector(0, RngState(0))


def test_unit_vector_coordinate_means_symmetric():
    r = RngState(21)
    n = 100_000
    acc = np.zeros(16)
    for _ in range(n):
        acc += sample_unit_vector(16, r)
    bound = 3.0 / math.sqrt(16 * n)
    assert np.all(np.abs(acc / n) < bound)


def test_orthogonal_unit_in_2d():
    for seed in range(10):
        u = sample_orthogonal_unit([1.0, 0.0], RngState(seed))
        assert u[0] == 0.0 and abs(u[1]) == 1.0


def test_orthogonal_unit_postcondition():
    h = np.array([3.0, 4.0, 0.0])
    u = sample_orthogonal_unit(h, RngState(1))
    assert abs(u @ h) < 1e-10
    assert abs(np.linalg.norm(u) - 1.0) < 1e-12


def test_orthogonal_unit_errors():
    with pytest.raises(DegenerateInputError):
        sample_orthogonal_unit(np.zeros(4), RngState(0))
    with pytest.raises(DimensionError):
        sample_orthogonal_unit([2.0], RngState(0))


def test_orthogonal_unit_symmetric_mean(nprng):
    h = nprng.standard_normal(32)
    r = RngState(5)
    n = 10_000
    m = np.mean([sample_orthogonal_unit(h, r) for _ in range(n)], axis=0)
    assert np.linalg.norm(m) < 3.0 / math.sqrt(n) * 1.1


def test_orthogonality_over_many_random_cases(nprng):
    r = RngState(8)
    worst = 0.0
    for _ in range(10_000):
        d = int(nprng.integers(2, 65))
        h = nprng.standard_normal(d) * 10.0 ** nprng.uniform(-3, 3)
        u = sample_orthogonal_unit(h, r)
        worst = max(worst, abs(u @ h) / np.linalg.norm(h))
    assert worst < 1e-10


def test_orthogonal_rows_batch(nprng):
    h = nprng.standard_normal((200, 12))
    u = sample_orthogonal_rows(h, RngState(4))
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(np.einsum("ij,ij->i", u, h))) < 1e-10


# --- singular values ---------------------------------------------------------


def test_singular_values_small_examples():
    np.testing.assert_allclose(singular_values(np.eye(2)), [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(singular_values(np.diag([3.0, 0.0])), [3.0, 0.0], atol=1e-15)


def test_singular_values_against_gram_eigenvalues(nprng):
    m = nprng.standard_normal((8, 8))
    ref = np.sqrt(np.clip(np.linalg.eigvalsh(m.T @ m)[::-1], 0, None))
    np.testing.assert_allclose(singular_values(m), ref, atol=1e-8)


def test_singular_values_frobenius_identity(nprng):
    for _ in range(100):
        r, c = nprng.integers(1, 33, size=2)
        m = nprng.standard_normal((r, c))
        s = singular_values(m)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        assert abs(np.sum(s**2) - frobenius_norm(m) ** 2) <= 1e-8 * frobenius_norm(m) ** 2


def test_singular_values_rectangular_matches_lapack(nprng):
    m = nprng.standard_normal((5, 11))
    s = singular_values(m)
    assert s.shape == (5,)
    np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), rtol=1e-10)


def test_singular_values_errors():
    with pytest.raises(InvalidInputError):
        singular_values(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(NumericError):
        singular_values(np.zeros((513, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32))
def test_singular_values_property(r, c, seed):
    m = np.random.default_rng(seed).standard_normal((r, c))
    np.testing.assert_allclose(singular_values(m), np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_convergence_error_type_exists():
    assert issubclass(ConvergenceError, NumericError)


# --- finite differences ------------------------------------------------------


def test_central_difference_quadratic():
    g = central_difference_gradient(lambda x: float(x @ x), [1.0, 2.0], step=1e-5)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)


def test_central_difference_constant():
    assert np.array_equal(central_difference_gradient(lambda x: 3.0, np.ones(4)), np.zeros(4))


def test_central_difference_formula():
    f = lambda x: float(np.sin(x[0]) * x[1] ** 3)
    x = np.array([0.3, 1.7])
    h = 1e-4
    exp0 = (f(x + [h, 0]) - f(x - [h, 0])) / (2 * h)
    exp1 = (f(x + [0, h]) - f(x - [0, h])) / (2 * h)
    np.testing.assert_allclose(central_difference_gradient(f, x, step=h), [exp0, exp1], rtol=0, atol=0)


def test_central_difference_non_finite():
    with pytest.raises(NumericError):
        central_difference_gradient(lambda x: float("nan"), [1.0])


# --- MATF32 ------------------------------------------------------------------


def test_matf32_layout_is_bit_exact(tmp_path):
    m = np.array([[1.0, -2.5, 0.125], [3.0, 4.0, 1e-3]])
    p = tmp_path / "m.bin"
    write_matf32(p, m)
    expected = b"MATF32\x00\x00" + struct.pack("<QQ", 2, 3) + struct.pack("<6f", *m.ravel())
    assert p.read_bytes() == expected
    assert MATF32_MAGIC == b"MATF32\x00\x00"


def test_matf32_round_trip_widens(tmp_path, nprng):
    m = nprng.standard_normal((7, 5)).astype(np.float32)
    p = tmp_path / "m.bin"
    write_matf32(p, m)
    back = read_matf32(p)
    assert back.dtype == np.float64
    assert np.array_equal(back, m.astype(np.float64))


def test_matf32_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAT\x00\x00" + struct.pack("<QQ", 1, 1) + struct.pack("<f", 1.0))
    with pytest.raises(InputDataError):
        read_matf32(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(MATF32_MAGIC + struct.pack("<QQ", 2, 2) + struct.pack("<3f", 1, 2, 3))
    with pytest.raises(InputDataError):
        read_matf32(short)
    with pytest.raises(InputDataError):
        read_matf32(tmp_path / "missing.bin")
    tiny = tmp_path / "tiny.bin"
    tiny.write_bytes(b"MAT")
    with pytest.raises(InputDataError):
        read_matf32(tiny)
