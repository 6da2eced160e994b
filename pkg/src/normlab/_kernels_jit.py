"""numba kernels.  Mirrors ``_kernels_np`` function for function."""
import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV52 = 1.0 / 4503599627370496.0  # 2**-52
DEGENERATE_RESIDUAL = 1e-8


@njit(inline="always", cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(key, index):
    return _mix64(np.uint64(key) ^ _mix64((np.uint64(index) + _ONE) * GOLDEN))


@njit(cache=True)
def u64_block(seed, start, n):
    out = np.empty(n, dtype=np.uint64)
    s = np.uint64(seed)
    c = np.uint64(start)
    for i in range(n):
        out[i] = _mix64(s + (c + np.uint64(i) + _ONE) * GOLDEN)
    return out


@njit(inline="always", cache=True)
def _fill_polar(key, counter, buf, npairs):
    # buf has room for 2 * npairs + 2 values; rejected candidates are
    # overwritten in place so the loop never branches on acceptance.
    i = 0
    c = counter
    while i < 2 * npairs:
        a = _mix64(key + (c + _ONE) * GOLDEN)
        b = _mix64(key + (c + _TWO) * GOLDEN)
        c += _TWO
        x = float(a >> np.uint64(11)) * _INV52 - 1.0
        y = float(b >> np.uint64(11)) * _INV52 - 1.0
        s = x * x + y * y
        ok = (s < 1.0) and (s > 0.0)
        ss = s if ok else 0.5
        f = math.sqrt(-2.0 * math.log(ss) / ss)
        buf[i] = x * f
        buf[i + 1] = y * f
        i += 2 if ok else 0
    return c


@njit(cache=True)
def normal_fill(seed, counter, n):
    npairs = (n + 1) // 2
    buf = np.empty(2 * npairs + 2)
    c = _fill_polar(np.uint64(seed), np.uint64(counter), buf, npairs)
    return buf[:n].copy(), c


@njit(cache=True)
def normal_rows(keys, n):
    r = keys.shape[0]
    npairs = (n + 1) // 2
    out = np.empty((r, n))
    buf = np.empty(2 * npairs + 2)
    for i in range(r):
        _fill_polar(keys[i], np.uint64(0), buf, npairs)
        for j in range(n):
            out[i, j] = buf[j]
    return out


@njit(cache=True)
def jacobi_singular_values(a, tol, max_sweeps):
    """One-sided (Hestenes) Jacobi on the columns of ``a`` (modified in place).

    Returns (column norms, sweeps used, converged flag).
    """
    m, n = a.shape
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    alpha += a[r, i] * a[r, i]
                    beta += a[r, j] * a[r, j]
                    gamma += a[r, i] * a[r, j]
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                for r in range(m):
                    ai = a[r, i]
                    aj = a[r, j]
                    a[r, i] = cs * ai - sn * aj
                    a[r, j] = sn * ai + cs * aj
        if not rotated:
            converged = True
            break
    norms = np.empty(n)
    for j in range(n):
        s = 0.0
        for r in range(m):
            s += a[r, j] * a[r, j]
        norms[j] = math.sqrt(s)
    return norms, sweeps, converged


@njit(inline="always", cache=True)
def _polar_step(h, u, d, c, cphi, sphi, bkey, buf, npairs):
    hh = 0.0
    for j in range(d):
        hh += h[j] * h[j]
    hn = math.sqrt(hh)
    attempt = 0
    key = bkey
    while True:
        _fill_polar(key, np.uint64(0), buf, npairs)
        uh = 0.0
        for j in range(d):
            u[j] = buf[j]
            uh += u[j] * h[j]
        proj = uh / hh
        uu = 0.0
        for j in range(d):
            u[j] -= proj * h[j]
            uu += u[j] * u[j]
        un = math.sqrt(uu)
        if un >= DEGENERATE_RESIDUAL:
            break
        attempt += 1
        key = stream_key(bkey, attempt)
    s1 = c * cphi / hn
    s2 = c * sphi / un
    for j in range(d):
        h[j] += s1 * h[j] + s2 * u[j]


@njit(cache=True)
def mc_decay(key, n_samples, d, norm_vis, norm_txt, cs, phi, angle):
    """Cosine between the evolving (vis, txt) pair, per sample and layer.

    Sample ``s`` draws from ``stream_key(key, s)``; within it, layer ``l``
    and modality ``m`` (0 vis, 1 txt) use block ``2 l + m``.
    """
    layers = cs.shape[0]
    out = np.empty((n_samples, layers + 1))
    hv = np.empty(d)
    ht = np.empty(d)
    u = np.empty(d)
    npairs = (d + 1) // 2
    buf = np.empty(2 * npairs + 2)
    cphi = math.cos(phi)
    sphi = math.sin(phi)
    c0 = math.cos(angle)
    s0 = math.sin(angle)
    for s in range(n_samples):
        skey = stream_key(key, s)
        for j in range(d):
            hv[j] = 0.0
            ht[j] = 0.0
        ht[0] = norm_txt
        hv[0] = norm_vis * c0
        hv[1] = norm_vis * s0
        out[s, 0] = c0
        for l in range(layers):
            c = cs[l]
            if c == 0.0:
                out[s, l + 1] = out[s, l]
                continue
            _polar_step(hv, u, d, c, cphi, sphi, stream_key(skey, 2 * l), buf, npairs)
            _polar_step(ht, u, d, c, cphi, sphi, stream_key(skey, 2 * l + 1), buf, npairs)
            vv = 0.0
            tt = 0.0
            vt = 0.0
            for j in range(d):
                vv += hv[j] * hv[j]
                tt += ht[j] * ht[j]
                vt += hv[j] * ht[j]
            out[s, l + 1] = vt / math.sqrt(vv * tt)
    return out
