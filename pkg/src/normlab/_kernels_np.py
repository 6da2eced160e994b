"""Pure-numpy kernels.  Same signatures and stream layout as ``_kernels_jit``."""
import math

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV52 = 1.0 / 4503599627370496.0
DEGENERATE_RESIDUAL = 1e-8

_U64 = np.uint64


def _mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _M1
        z = (z ^ (z >> _U64(27))) * _M2
        return z ^ (z >> _U64(31))


def _stream_keys(keys, index):
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        salt = _mix64((np.asarray(index, dtype=np.uint64) + _U64(1)) * GOLDEN)
    return _mix64(keys ^ salt)


def stream_key(key, index):
    return _U64(_stream_keys(np.array([key], dtype=np.uint64), index)[0])


def u64_block(seed, start, n):
    ctr = np.arange(1, n + 1, dtype=np.uint64) + _U64(start)
    with np.errstate(over="ignore"):
        return _mix64(_U64(seed) + ctr * GOLDEN)


def _polar_rows(keys, counters, n):
    """Polar Box-Muller for each row's (key, counter) stream.

    Returns the normals and each row's counter after the last candidate
    pair consumed, exactly as the sequential loop would leave it.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64).copy()
    rows = keys.shape[0]
    npairs = (n + 1) // 2
    out = np.empty((rows, 2 * npairs))
    filled = np.zeros(rows, dtype=np.int64)
    pending = np.arange(rows)
    batch = max(4, int(npairs * 1.35) + 4)
    steps = np.arange(batch, dtype=np.uint64) * _U64(2)
    while pending.size:
        k = keys[pending][:, None]
        idx = counters[pending][:, None] + steps
        with np.errstate(over="ignore"):
            a = _mix64(k + (idx + _U64(1)) * GOLDEN)
            b = _mix64(k + (idx + _U64(2)) * GOLDEN)
        x = (a >> _U64(11)).astype(np.float64) * _INV52 - 1.0
        y = (b >> _U64(11)).astype(np.float64) * _INV52 - 1.0
        s = x * x + y * y
        ok = (s < 1.0) & (s > 0.0)
        ss = np.where(ok, s, 0.5)
        f = np.sqrt(-2.0 * np.log(ss) / ss)
        need = npairs - filled[pending]
        rank = np.cumsum(ok, axis=1)
        take = ok & (rank <= need[:, None])
        r_idx, c_idx = np.nonzero(take)
        pos = filled[pending][r_idx] + rank[r_idx, c_idx] - 1
        out[pending[r_idx], 2 * pos] = x[r_idx, c_idx] * f[r_idx, c_idx]
        out[pending[r_idx], 2 * pos + 1] = y[r_idx, c_idx] * f[r_idx, c_idx]
        got = take.sum(axis=1)
        done = got == need
        # counter after the last used pair for finished rows, whole batch otherwise
        last = np.where(done, np.argmax(rank >= need[:, None], axis=1) + 1, batch)
        counters[pending] += last.astype(np.uint64) * _U64(2)
        filled[pending] += got
        pending = pending[~done]
    return out[:, :n], counters


def normal_fill(seed, counter, n):
    out, ctr = _polar_rows(np.array([seed], dtype=np.uint64), np.array([counter], dtype=np.uint64), n)
    return out[0].copy(), _U64(ctr[0])


def normal_rows(keys, n):
    keys = np.asarray(keys, dtype=np.uint64)
    out, _ = _polar_rows(keys, np.zeros(keys.shape[0], dtype=np.uint64), n)
    return np.ascontiguousarray(out)


def _round_robin(n):
    """Rounds of disjoint column pairs covering every pair once (circle method)."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p), max(p)) for p in pairs if -1 not in p]
        rounds.append((np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_singular_values(a, tol, max_sweeps):
    """One-sided Jacobi, rotating each round of disjoint column pairs at once."""
    n = a.shape[1]
    rounds = _round_robin(n) if n > 1 else []
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        for ii, jj in rounds:
            ai = a[:, ii]
            aj = a[:, jj]
            alpha = np.einsum("ij,ij->j", ai, ai)
            beta = np.einsum("ij,ij->j", aj, aj)
            gamma = np.einsum("ij,ij->j", ai, aj)
            act = (alpha != 0.0) & (beta != 0.0) & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
            if not act.any():
                continue
            rotated = True
            g = np.where(act, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            sgn = np.where(zeta >= 0.0, 1.0, -1.0)
            t = np.where(act, sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta)), 0.0)
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            a[:, ii] = cs * ai - sn * aj
            a[:, jj] = sn * ai + cs * aj
        if not rotated:
            converged = True
            break
    return np.sqrt(np.einsum("ij,ij->j", a, a)), sweeps, converged


def _polar_step_rows(h, c, cphi, sphi, bkeys):
    d = h.shape[1]
    hh = np.einsum("ij,ij->i", h, h)
    hn = np.sqrt(hh)
    u = normal_rows(bkeys, d)
    u -= (np.einsum("ij,ij->i", u, h) / hh)[:, None] * h
    un = np.sqrt(np.einsum("ij,ij->i", u, u))
    for i in np.nonzero(un < DEGENERATE_RESIDUAL)[0]:
        attempt = 0
        while un[i] < DEGENERATE_RESIDUAL:
            attempt += 1
            v = normal_rows(np.array([stream_key(bkeys[i], attempt)]), d)[0]
            v -= (v @ h[i]) / hh[i] * h[i]
            u[i] = v
            un[i] = math.sqrt(v @ v)
    h += (c * cphi / hn)[:, None] * h + (c * sphi / un)[:, None] * u


def mc_decay(key, n_samples, d, norm_vis, norm_txt, cs, phi, angle, chunk=8192):
    layers = cs.shape[0]
    out = np.empty((n_samples, layers + 1))
    cphi, sphi = math.cos(phi), math.sin(phi)
    c0, s0 = math.cos(angle), math.sin(angle)
    for lo in range(0, n_samples, chunk):
        hi = min(n_samples, lo + chunk)
        m = hi - lo
        skeys = _stream_keys(np.full(m, key, dtype=np.uint64), np.arange(lo, hi, dtype=np.uint64))
        hv = np.zeros((m, d))
        ht = np.zeros((m, d))
        ht[:, 0] = norm_txt
        hv[:, 0] = norm_vis * c0
        hv[:, 1] = norm_vis * s0
        out[lo:hi, 0] = c0
        for l in range(layers):
            c = float(cs[l])
            if c == 0.0:
                out[lo:hi, l + 1] = out[lo:hi, l]
                continue
            cvec = np.full(m, c)
            _polar_step_rows(hv, cvec, cphi, sphi, _stream_keys(skeys, 2 * l))
            _polar_step_rows(ht, cvec, cphi, sphi, _stream_keys(skeys, 2 * l + 1))
            vv = np.einsum("ij,ij->i", hv, hv)
            tt = np.einsum("ij,ij->i", ht, ht)
            vt = np.einsum("ij,ij->i", hv, ht)
            out[lo:hi, l + 1] = vt / np.sqrt(vv * tt)
    return out
