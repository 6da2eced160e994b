"""The numba kernels and their numpy fallbacks must consume the random
stream identically and agree to rounding."""
import os
import subprocess
import sys

import numpy as np
import pytest

from normlab import _kernels_jit as jit
from normlab import _kernels_np as npk

KEY = np.uint64(0xDEADBEEF12345678)


def test_u64_block_identical():
    assert np.array_equal(jit.u64_block(KEY, np.uint64(5), 1000), npk.u64_block(KEY, np.uint64(5), 1000))


def test_stream_key_identical():
    for i in range(20):
        assert jit.stream_key(KEY, np.uint64(i)) == npk.stream_key(KEY, np.uint64(i))


@pytest.mark.parametrize("n", [1, 2, 3, 64, 1001])
def test_normal_fill_parity(n):
    a, ca = jit.normal_fill(KEY, np.uint64(10), n)
    b, cb = npk.normal_fill(KEY, np.uint64(10), n)
    assert int(ca) == int(cb)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_normal_rows_parity():
    keys = np.array([1, 2, 3, 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    np.testing.assert_allclose(jit.normal_rows(keys, 33), npk.normal_rows(keys, 33), rtol=0, atol=1e-15)


@pytest.mark.parametrize("shape", [(2, 2), (9, 4), (16, 16), (40, 7)])
def test_jacobi_parity(shape, nprng):
    a = nprng.standard_normal(shape)
    sj, _, okj = jit.jacobi_singular_values(a.copy(), 1e-12, 64)
    sn, _, okn = npk.jacobi_singular_values(a.copy(), 1e-12, 64)
    assert okj and okn
    np.testing.assert_allclose(np.sort(sj), np.sort(sn), rtol=1e-12, atol=1e-13)


def test_mc_decay_parity():
    cs = np.array([0.3, 0.5, 0.0])
    a = jit.mc_decay(KEY, 2000, 16, 30.0, 1.0, cs, 1.2, 0.7)
    b = npk.mc_decay(KEY, 2000, 16, 30.0, 1.0, cs, 1.2, 0.7)
    assert a.shape == b.shape == (2000, 4)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    # a zero update copies the previous layer exactly
    assert np.array_equal(a[:, 3], a[:, 2])


def _backend_in_subprocess(flag):
    env = dict(os.environ)
    env.pop("NORMLAB_NO_NUMBA", None)
    if flag is not None:
        env["NORMLAB_NO_NUMBA"] = flag
    out = subprocess.run(
        [sys.executable, "-c", "import normlab; print(normlab.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_env_flag_selects_numpy_backend():
    assert _backend_in_subprocess("1") == "numpy"
    assert _backend_in_subprocess(None) == "numba"
