# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-row tail kernels.

Every function takes a 2-D C-contiguous float64 array whose rows are cell
probability vectors (a_0, ..., a_m) and returns one tail probability
P(C_1 + ... + C_n > u) per row.  The pure-numpy twin lives in
``_kernels_py`` and must stay numerically interchangeable with this file.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, erfc, fabs, pow, M_PI, NAN, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double FLUSH = 1e-300
cdef double SQRT2 = 1.4142135623730951


cdef inline double _norm_sf(double x) noexcept nogil:
    return 0.5 * erfc(x / SQRT2)


cdef inline double _norm_pdf(double x) noexcept nogil:
    return exp(-0.5 * x * x) / sqrt(2.0 * M_PI)


cdef inline double _clamp01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef void _convolve(const double* x, Py_ssize_t nx, const double* y,
                    Py_ssize_t ny, double* out) noexcept nogil:
    cdef Py_ssize_t i, j, nout = nx + ny - 1
    cdef double xi
    for i in range(nout):
        out[i] = 0.0
    for i in range(nx):
        xi = x[i]
        if xi == 0.0:
            continue
        for j in range(ny):
            out[i + j] += xi * y[j]
    for i in range(nout):
        if out[i] < FLUSH:
            out[i] = 0.0


cdef double _exact_row_power(const double* a, Py_ssize_t m1, int n, long u,
                             double* res, double* base, double* tmp) noexcept nogil:
    # square-and-multiply on the exponent, then a suffix sum above u
    cdef Py_ssize_t nres = 1, nbase = m1, i
    cdef int e = n
    cdef double* swap
    cdef double tail = 0.0
    res[0] = 1.0
    for i in range(m1):
        base[i] = a[i]
    while e > 0:
        if e & 1:
            _convolve(res, nres, base, nbase, tmp)
            nres = nres + nbase - 1
            swap = res; res = tmp; tmp = swap
        e >>= 1
        if e > 0:
            _convolve(base, nbase, base, nbase, tmp)
            nbase = 2 * nbase - 1
            swap = base; base = tmp; tmp = swap
    i = nres - 1
    while i > u and i >= 0:
        tail += res[i]
        i -= 1
    return tail


cdef double _exact_row_pruned(const double* a, Py_ssize_t m1, int n, long u,
                              double* win, double* tmp, double* sfx) noexcept nogil:
    # sequential expansion; mass that can no longer cross u (or must cross it)
    # is removed after each factor, the last factor is a dot with P(C > k)
    cdef Py_ssize_t lo = 0, hi = m1 - 1, i, k
    cdef Py_ssize_t off, nwin, cut_lo, cut_hi, width
    cdef long r
    cdef int j
    cdef double certain = 0.0, tail = 0.0, acc = 0.0
    while lo < m1 and a[lo] == 0.0:
        lo += 1
    while hi > lo and a[hi] == 0.0:
        hi -= 1
    if u < <long>n * lo:
        return 1.0
    if u >= <long>n * hi:
        return 0.0
    # sfx[k] = P(C > k) for k = 0..m1-1
    acc = 0.0
    for k in range(m1 - 1, -1, -1):
        sfx[k] = acc
        acc += a[k]
    if n == 1:
        return sfx[u] if u >= 0 else acc
    width = hi - lo + 1
    for i in range(width):
        win[i] = a[lo + i]
    off = lo
    nwin = width
    for j in range(1, n):
        r = n - j
        # indices off+i with off+i + r*hi <= u never cross
        cut_lo = 0
        while cut_lo < nwin and off + cut_lo + r * hi <= u:
            cut_lo += 1
        # indices with off+i + r*lo > u always cross
        cut_hi = nwin
        while cut_hi > cut_lo and off + cut_hi - 1 + r * lo > u:
            cut_hi -= 1
            certain += win[cut_hi]
        if cut_hi <= cut_lo:
            return _clamp01(certain)
        if cut_lo > 0:
            for i in range(cut_hi - cut_lo):
                win[i] = win[cut_lo + i]
        off += cut_lo
        nwin = cut_hi - cut_lo
        if j < n - 1:
            _convolve(win, nwin, a + lo, width, tmp)
            nwin = nwin + width - 1
            off += lo
            for i in range(nwin):
                win[i] = tmp[i]
    for i in range(nwin):
        k = u - (off + i)
        if k < 0:
            tail += win[i] * acc
        elif k < m1:
            tail += win[i] * sfx[k]
    return _clamp01(certain + tail)


def exact_upper_tail(cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a, int n,
                     long u, bint prune=True):
    """P(M > u) for every row of ``a`` by expanding the n-th power of its pgf."""
    cdef Py_ssize_t K = a.shape[0], m1 = a.shape[1], row
    cdef Py_ssize_t size = <Py_ssize_t>n * (m1 - 1) + m1 + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(K, dtype=np.float64)
    cdef double* b1 = <double*>malloc(size * sizeof(double))
    cdef double* b2 = <double*>malloc(size * sizeof(double))
    cdef double* b3 = <double*>malloc(size * sizeof(double))
    cdef const double* ap = <const double*>a.data
    if b1 == NULL or b2 == NULL or b3 == NULL:
        free(b1); free(b2); free(b3)
        raise MemoryError()
    try:
        with nogil:
            for row in range(K):
                if u < 0:
                    out[row] = 1.0
                elif u >= <long>n * (m1 - 1):
                    out[row] = 0.0
                elif prune:
                    out[row] = _exact_row_pruned(ap + row * m1, m1, n, u, b1, b2, b3)
                else:
                    out[row] = _clamp01(_exact_row_power(ap + row * m1, m1, n, u, b1, b2, b3))
    finally:
        free(b1); free(b2); free(b3)
    return out


cdef void _tilt(double t, const double* la, const double* dd, Py_ssize_t cnt,
                double* kd, double* mean, double* var) noexcept nogil:
    # cgf of (C - centre) under exponential tilting, in log-sum-exp form
    cdef Py_ssize_t i
    cdef double mx = la[0] + t * dd[0], v, w, s0 = 0.0, s1 = 0.0, s2 = 0.0
    for i in range(1, cnt):
        v = la[i] + t * dd[i]
        if v > mx:
            mx = v
    for i in range(cnt):
        w = exp(la[i] + t * dd[i] - mx)
        s0 += w
        s1 += w * dd[i]
        s2 += w * dd[i] * dd[i]
    kd[0] = mx + log(s0)
    mean[0] = s1 / s0
    var[0] = s2 / s0 - mean[0] * mean[0]
    if var[0] < 0.0:
        var[0] = 0.0


cdef double _lr_row(const double* a, Py_ssize_t m1, int n, long u, int variant,
                    double* la, double* dd) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = m1 - 1, l, cnt = 0
    cdef long s = u + 1
    cdef double centre, t, tlo, thi, f, kd, var, newton, mean0, var0, kd0
    cdef double g, sig, lam, r, z
    cdef int it
    while lo < m1 and a[lo] == 0.0:
        lo += 1
    while hi > lo and a[hi] == 0.0:
        hi -= 1
    if s <= <long>n * lo:
        return 1.0
    if s > <long>n * hi:
        return 0.0
    if s == <long>n * hi:
        return pow(a[hi], n)
    centre = <double>s / n
    for l in range(lo, hi + 1):
        if a[l] > 0.0:
            la[cnt] = log(a[l])
            dd[cnt] = l - centre
            cnt += 1
    _tilt(0.0, la, dd, cnt, &kd0, &mean0, &var0)
    # safeguarded Newton; the bracket is opened lazily, with steps capped
    # while one side is still unbounded
    tlo = -INFINITY
    thi = INFINITY
    t = 0.0
    f = mean0
    var = var0
    for it in range(400):
        if it:
            _tilt(t, la, dd, cnt, &kd, &f, &var)
        if fabs(f) <= 1e-12 * (1.0 + fabs(centre)):
            break
        if f > 0.0:
            thi = t
        else:
            tlo = t
        if thi - tlo <= 1e-15 * (1.0 + fabs(t)):
            break
        if var > 0.0:
            newton = t - f / var
        else:
            newton = NAN
        if not (newton > tlo and newton < thi):
            if tlo == -INFINITY:
                newton = t - (1.0 if fabs(t) < 0.5 else 2.0 * fabs(t))
            elif thi == INFINITY:
                newton = t + (1.0 if fabs(t) < 0.5 else 2.0 * fabs(t))
            else:
                newton = 0.5 * (tlo + thi)
        if fabs(newton) > 1e5:
            return NAN
        t = newton
    else:
        return NAN
    if t == 0.0:
        kd = kd0
        var = var0
    g = t
    if fabs(g) < 1e-6:
        # centre of the distribution: saddlepoint terms cancel, use the CLT
        z = (u + 0.5 - n * (mean0 + centre)) / sqrt(n * var0)
        return _norm_sf(z)
    sig = sqrt(var)
    if variant == 0:
        lam = sqrt(<double>n) * (1.0 - exp(-g)) * sig
    else:
        lam = sqrt(<double>n) * (1.0 - exp(g)) * sig
    r = 2.0 * n * (-kd)
    r = sqrt(r) if r > 0.0 else 0.0
    if g < 0.0:
        r = -r
    if r == 0.0:
        return _norm_sf(0.0)
    return _clamp01(_norm_sf(r) + _norm_pdf(r) * (1.0 / lam - 1.0 / r))


def lr_upper_tail(cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a, int n,
                  long u, int variant=0):
    """Lugannani-Rice approximation of P(M > u) for every row of ``a``.

    Rows whose saddlepoint equation fails to converge come back as NaN.
    """
    cdef Py_ssize_t K = a.shape[0], m1 = a.shape[1], row
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(K, dtype=np.float64)
    cdef double* la = <double*>malloc(m1 * sizeof(double))
    cdef double* dd = <double*>malloc(m1 * sizeof(double))
    cdef const double* ap = <const double*>a.data
    if la == NULL or dd == NULL:
        free(la); free(dd)
        raise MemoryError()
    try:
        with nogil:
            for row in range(K):
                if u < 0:
                    out[row] = 1.0
                elif u >= <long>n * (m1 - 1):
                    out[row] = 0.0
                else:
                    out[row] = _lr_row(ap + row * m1, m1, n, u, variant, la, dd)
    finally:
        free(la); free(dd)
    return out
