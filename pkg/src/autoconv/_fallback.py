"""Pure numpy kernels, used when the compiled extension is unavailable.

Mirrors the contract of ``autoconv._kernels`` exactly; only speed differs.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

NAME = "numpy"


def profile(v: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    out = np.zeros(2 * n + 1)
    out[1:2 * n] = np.convolve(v, v)
    return out


def _parts(L: np.ndarray):
    a, b = L[:-1], L[1:]
    l2sq = float(np.sum(a * a + a * b + b * b)) / 3.0
    l1 = 0.5 * float(np.sum(a + b))
    jm = int(np.argmax(a))
    return l2sq, float(a[jm]), jm, l1


def score_parts(v: np.ndarray):
    """Return ``(l2sq, linf, argmax, l1)`` with the trapezoid L1."""
    return _parts(profile(v))


def _ratio(v: np.ndarray) -> float:
    l2sq, linf, _, l1 = _parts(profile(v))
    return l2sq / (linf * l1)


def score_batch(X: np.ndarray, threads: int = 1) -> np.ndarray:
    rows = X.shape[0]
    if threads <= 1 or rows < 2:
        return np.array([_ratio(x) for x in X], dtype=np.float64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.fromiter(pool.map(_ratio, X), dtype=np.float64, count=rows)


def gradient(v: np.ndarray):
    """Gradient of the ratio with the smallest argmax index frozen.

    Returns ``(grad, argmax, ratio)``.
    """
    n = v.shape[0]
    L = profile(v)
    A, M, jm, B = _parts(L)
    Q = A / (M * B)
    w = np.zeros(2 * n + 1)
    w[1:2 * n] = (L[:2 * n - 1] + 4.0 * L[1:2 * n] + L[2:]) / 3.0
    # dA/dv_k = 2 * sum_m w[k + m + 1] * v[m]
    dA = 2.0 * np.correlate(w[1:2 * n], v, mode="valid")
    dM = np.zeros(n)
    k = np.arange(n)
    idx = jm - 1 - k
    ok = (idx >= 0) & (idx < n)
    dM[ok] = 2.0 * v[idx[ok]]
    S = float(np.sum(v))
    g = Q * (dA / A - dM / M - 2.0 * S / B)
    return g, jm, Q


def gradient_stream(start, s, steps, base_step, iter_exponent, stream_exponent, rounding_digits, eps):
    """Run one stream of projected normalized-gradient steps.

    ``rounding_digits < 0`` disables rounding. Returns the final vector.
    """
    v = np.array(start, dtype=np.float64, copy=True)
    for i in range(steps):
        g, _, q = gradient(v)
        norm = float(np.sqrt(np.dot(g, g)))
        if not norm >= eps:
            continue
        step = base_step / ((i + 1.0) ** iter_exponent * (s + 1.0) ** stream_exponent) * (1.0 - q)
        nxt = v + step * (g / norm)
        if rounding_digits >= 0:
            nxt = np.round(nxt, rounding_digits)
        nxt = np.maximum(nxt, 0.0)
        if np.any(nxt > 0):
            v = nxt
    return v
