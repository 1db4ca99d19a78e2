# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the step-function autoconvolution objective.

Same contract as :mod:`autoconv._fallback`. Every routine works on the
sample vector ``L[0..2N]`` with ``L[j] = sum_n v[n] * v[j - 1 - n]``.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, pow, rint

cnp.import_array()

NAME = "cython"


cdef inline double _dot(const double* a, const double* b, Py_ssize_t m) noexcept nogil:
    # four independent partial sums so the loop pipelines and vectorizes
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t i = 0
    while i + 4 <= m:
        s0 = s0 + a[i] * b[i]
        s1 = s1 + a[i + 1] * b[i + 1]
        s2 = s2 + a[i + 2] * b[i + 2]
        s3 = s3 + a[i + 3] * b[i + 3]
        i = i + 4
    while i < m:
        s0 = s0 + a[i] * b[i]
        i = i + 1
    return (s0 + s1) + (s2 + s3)


cdef inline void _profile(const double[::1] v, double[::1] out, double[::1] rev) noexcept nogil:
    # v[j - 1 - a] == rev[n - j + a], so each sample is a forward dot product;
    # the terms pair up as (a, j - 1 - a), so only half of them are summed
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t j, i, lo, hi, m, half
    cdef double acc
    for i in range(n):
        rev[i] = v[n - 1 - i]
    out[0] = 0.0
    out[2 * n] = 0.0
    for j in range(1, 2 * n):
        lo = j - n if j > n else 0
        hi = j - 1 if j - 1 < n - 1 else n - 1
        m = hi - lo + 1
        half = m // 2
        acc = 2.0 * _dot(&v[lo], &rev[n - j + lo], half)
        if m % 2:
            acc = acc + v[lo + half] * v[lo + half]
        out[j] = acc


cdef inline double _ratio(const double[::1] L, Py_ssize_t n, double* l2sq,
                          double* linf, Py_ssize_t* jmax, double* l1) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s2 = 0.0, s1 = 0.0, m = L[0], a, b
    cdef Py_ssize_t jm = 0
    for j in range(2 * n):
        a = L[j]
        b = L[j + 1]
        s2 = s2 + (a * a + a * b + b * b)
        s1 = s1 + (a + b)
        if a > m:
            m = a
            jm = j
    s2 = s2 / 3.0
    s1 = 0.5 * s1
    l2sq[0] = s2
    linf[0] = m
    jmax[0] = jm
    l1[0] = s1
    return s2 / (m * s1)


cdef double _row_ratio(const double[::1] v, double[::1] work, double[::1] rev) noexcept nogil:
    cdef double l2sq, linf, l1
    cdef Py_ssize_t jm
    _profile(v, work, rev)
    return _ratio(work, v.shape[0], &l2sq, &linf, &jm, &l1)


def profile(const double[::1] v):
    cdef Py_ssize_t n = v.shape[0]
    out = np.empty(2 * n + 1, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] rev = np.empty(n, dtype=np.float64)
    with nogil:
        _profile(v, o, rev)
    return out


def score_parts(const double[::1] v):
    """Return ``(l2sq, linf, argmax, l1)`` with the trapezoid L1."""
    cdef Py_ssize_t n = v.shape[0]
    L = np.empty(2 * n + 1, dtype=np.float64)
    cdef double[::1] Lv = L
    cdef double[::1] rev = np.empty(n, dtype=np.float64)
    cdef double l2sq, linf, l1
    cdef Py_ssize_t jm
    with nogil:
        _profile(v, Lv, rev)
        _ratio(Lv, n, &l2sq, &linf, &jm, &l1)
    return l2sq, linf, int(jm), l1


def score_batch(const double[:, ::1] X, int threads=1):
    """Ratio for every row of ``X``. Rows are independent, so the result
    does not depend on ``threads``."""
    cdef Py_ssize_t rows = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    out = np.empty(rows, dtype=np.float64)
    work = np.empty((rows, 2 * n + 1), dtype=np.float64)
    revs = np.empty((rows, n), dtype=np.float64)
    cdef double[::1] o = out
    cdef double[:, ::1] W = work
    cdef double[:, ::1] R = revs
    cdef Py_ssize_t r
    if threads < 1:
        threads = 1
    for r in prange(rows, nogil=True, num_threads=threads, schedule="static"):
        o[r] = _row_ratio(X[r], W[r], R[r])
    return out


cdef double _grad_into(const double[::1] v, double[::1] L, double[::1] w,
                       double[::1] g, double[::1] rev) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0]
    cdef double A, M, B, Q, S = 0.0, acc, dM
    cdef Py_ssize_t jm, j, k, idx
    _profile(v, L, rev)
    Q = _ratio(L, n, &A, &M, &jm, &B)
    for j in range(1, 2 * n):
        w[j] = (L[j - 1] + 4.0 * L[j] + L[j + 1]) / 3.0
    for k in range(n):
        S = S + v[k]
    for k in range(n):
        acc = _dot(&w[k + 1], &v[0], n)
        idx = jm - 1 - k
        dM = 2.0 * v[idx] if 0 <= idx < n else 0.0
        g[k] = Q * (2.0 * acc / A - dM / M - 2.0 * S / B)
    return Q


def gradient(const double[::1] v):
    """Gradient of the ratio with the smallest argmax index frozen.

    Returns ``(grad, argmax, ratio)``.
    """
    cdef Py_ssize_t n = v.shape[0]
    L = np.empty(2 * n + 1, dtype=np.float64)
    g = np.empty(n, dtype=np.float64)
    cdef double[::1] Lv = L
    cdef double[::1] wv = np.zeros(2 * n + 1, dtype=np.float64)
    cdef double[::1] gv = g
    cdef double[::1] rev = np.empty(n, dtype=np.float64)
    cdef double Q
    with nogil:
        Q = _grad_into(v, Lv, wv, gv, rev)
    return g, int(np.argmax(L[:2 * n])), Q


def gradient_stream(const double[::1] start, long s, long steps, double base_step,
                    double iter_exponent, double stream_exponent, int rounding_digits,
                    double eps):
    """Run one stream of projected normalized-gradient steps.

    ``rounding_digits < 0`` disables rounding. Returns the final vector.
    """
    cdef Py_ssize_t n = start.shape[0]
    out = np.array(start, dtype=np.float64, copy=True)
    nxt_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] v = out
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] L = np.empty(2 * n + 1, dtype=np.float64)
    cdef double[::1] w = np.zeros(2 * n + 1, dtype=np.float64)
    cdef double[::1] g = np.empty(n, dtype=np.float64)
    cdef double[::1] rev = np.empty(n, dtype=np.float64)
    cdef double Q, norm, step, x, scale = 10.0 ** rounding_digits if rounding_digits >= 0 else 1.0
    cdef long i
    cdef Py_ssize_t k
    cdef bint any_pos
    with nogil:
        for i in range(steps):
            Q = _grad_into(v, L, w, g, rev)
            norm = 0.0
            for k in range(n):
                norm = norm + g[k] * g[k]
            norm = sqrt(norm)
            if not norm >= eps:
                continue
            step = base_step / (pow(i + 1.0, iter_exponent) * pow(s + 1.0, stream_exponent)) * (1.0 - Q)
            any_pos = False
            for k in range(n):
                x = v[k] + step * (g[k] / norm)
                if rounding_digits >= 0:
                    x = rint(x * scale) / scale
                if x < 0.0:
                    x = 0.0
                if x > 0.0:
                    any_pos = True
                nxt[k] = x
            if any_pos:
                for k in range(n):
                    v[k] = nxt[k]
    return out
