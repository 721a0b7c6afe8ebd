"""Pure-numpy twin of the compiled ``_kernels`` extension.

Selected automatically when the extension is not built, or when the
environment variable ``MWCHART_PURE_PYTHON`` is set.  Results agree with the
compiled kernels to floating round-off.
"""

import numpy as np
from scipy.special import ndtr

_FLUSH = 1e-300


def _power(row, n):
    res = np.ones(1)
    base = row
    e = n
    while e:
        if e & 1:
            res = np.convolve(res, base)
            res[res < _FLUSH] = 0.0
        e >>= 1
        if e:
            base = np.convolve(base, base)
            base[base < _FLUSH] = 0.0
    return res


def _pruned(row, n, u):
    nz = np.flatnonzero(row)
    lo, hi = int(nz[0]), int(nz[-1])
    if u < n * lo:
        return 1.0
    if u >= n * hi:
        return 0.0
    total = row.sum()
    sfx = total - np.cumsum(row)  # sfx[k] = P(C > k)
    if n == 1:
        return float(sfx[u]) if u >= 0 else float(total)
    core = row[lo:hi + 1]
    win = core.copy()
    off = lo
    certain = 0.0
    for j in range(1, n):
        r = n - j
        idx = off + np.arange(win.size)
        keep_from = int(np.searchsorted(idx + r * hi, u, side="right"))
        keep_to = int(np.searchsorted(idx + r * lo, u, side="right"))
        certain += win[keep_to:][::-1].sum()
        if keep_to <= keep_from:
            return min(max(certain, 0.0), 1.0)
        win = win[keep_from:keep_to]
        off += keep_from
        if j < n - 1:
            win = np.convolve(win, core)
            win[win < _FLUSH] = 0.0
            off += lo
    k = u - (off + np.arange(win.size))
    w = np.where(k < 0, total, sfx[np.clip(k, 0, row.size - 1)])
    w = np.where(k >= row.size, 0.0, w)
    return min(max(certain + float(win @ w), 0.0), 1.0)


def exact_upper_tail(a, n, u, prune=True):
    """P(M > u) for every row of ``a`` by expanding the n-th power of its pgf."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    K, m1 = a.shape
    out = np.empty(K)
    for i in range(K):
        if u < 0:
            out[i] = 1.0
        elif u >= n * (m1 - 1):
            out[i] = 0.0
        elif prune:
            out[i] = _pruned(a[i], n, u)
        else:
            res = _power(a[i], n)
            out[i] = min(max(res[u + 1:][::-1].sum(), 0.0), 1.0)
    return out


def _tilt(t, la, dd):
    # t: (K,), la/dd: (K, L) with -inf in la marking empty cells
    z = la + t[:, None] * dd
    mx = z.max(axis=1)
    w = np.exp(z - mx[:, None])
    s0 = w.sum(axis=1)
    mean = (w * dd).sum(axis=1) / s0
    var = (w * dd * dd).sum(axis=1) / s0 - mean * mean
    return mx + np.log(s0), mean, np.maximum(var, 0.0)


def lr_upper_tail(a, n, u, variant=0):
    """Lugannani-Rice approximation of P(M > u) for every row of ``a``.

    Rows whose saddlepoint equation fails to converge come back as NaN.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    K, m1 = a.shape
    out = np.empty(K)
    if u < 0:
        out[:] = 1.0
        return out
    if u >= n * (m1 - 1):
        out[:] = 0.0
        return out
    s = u + 1
    pos = a > 0
    lo = pos.argmax(axis=1)
    hi = m1 - 1 - pos[:, ::-1].argmax(axis=1)
    top = np.take_along_axis(a, hi[:, None], axis=1)[:, 0]
    out[s <= n * lo] = 1.0
    out[s > n * hi] = 0.0
    at_max = s == n * hi
    out[at_max] = top[at_max] ** n
    work = (s > n * lo) & (s < n * hi)
    if not work.any():
        return out
    centre = s / n
    aw = a[work]
    with np.errstate(divide="ignore"):
        la = np.log(aw)
    dd = np.broadcast_to(np.arange(m1) - centre, aw.shape)
    kd0, mean0, var0 = _tilt(np.zeros(len(aw)), la, dd)

    tlo = np.full(len(aw), -40.0)
    thi = np.full(len(aw), 40.0)
    for _ in range(12):
        f = _tilt(tlo, la, dd)[1]
        grow = (f > 0) & (tlo > -1e5)
        if not grow.any():
            break
        tlo[grow] *= 2.0
    for _ in range(12):
        f = _tilt(thi, la, dd)[1]
        grow = (f < 0) & (thi < 1e5)
        if not grow.any():
            break
        thi[grow] *= 2.0

    t = np.zeros(len(aw))
    active = np.ones(len(aw), dtype=bool)
    kd = np.empty(len(aw))
    var = np.empty(len(aw))
    for _ in range(400):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ka, f, va = _tilt(t[idx], la[idx], dd[idx])
        kd[idx], var[idx] = ka, va
        done = np.abs(f) <= 1e-12 * (1.0 + abs(centre))
        pos_f = f > 0
        thi[idx] = np.where(~done & pos_f, t[idx], thi[idx])
        tlo[idx] = np.where(~done & ~pos_f, t[idx], tlo[idx])
        narrow = thi[idx] - tlo[idx] <= 1e-15 * (1.0 + np.abs(t[idx]))
        stop = done | narrow
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = np.where(va > 0, t[idx] - f / va, np.nan)
        bad = ~((newton > tlo[idx]) & (newton < thi[idx]))
        newton = np.where(bad, 0.5 * (tlo[idx] + thi[idx]), newton)
        t[idx] = np.where(stop, t[idx], newton)
        active[idx[stop]] = False
    g = t

    res = np.empty(len(aw))
    central = np.abs(g) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (u + 0.5 - n * (mean0 + centre)) / np.sqrt(n * var0)
        sig = np.sqrt(var)
        fac = 1.0 - np.exp(-g) if variant == 0 else 1.0 - np.exp(g)
        lam = np.sqrt(n) * fac * sig
        r = np.sign(g) * np.sqrt(np.maximum(2.0 * n * (-kd), 0.0))
        phi = np.exp(-0.5 * r * r) / np.sqrt(2 * np.pi)
        lr = ndtr(-r) + phi * (1.0 / lam - 1.0 / r)
    res = np.where(central, ndtr(-z), lr)
    res = np.where((r == 0.0) & ~central, 0.5, res)
    res = np.clip(res, 0.0, 1.0)
    res[active] = np.nan
    out[work] = res
    return out
