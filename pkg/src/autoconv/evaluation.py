"""Exact evaluation of the autoconvolution Hölder ratio for step functions.

A height vector ``v`` of length ``N`` encodes ``f = sum_n v[n] * 1_[n, n+1)``.
Its autoconvolution is piecewise linear with nodes at the integers, so it is
fully described by the samples ``L[j] = (f*f)(j)`` for ``j = 0..2N``. All
three norms of ``f*f`` follow from those samples in closed form:

* ``||f*f||_1  = (1/2) sum_j (L[j] + L[j+1]) = (sum v)^2``
* ``||f*f||_oo = max_j L[j]``
* ``||f*f||_2^2 = (1/3) sum_j (L[j]^2 + L[j] L[j+1] + L[j+1]^2)``

The ratio ``||f*f||_2^2 / (||f*f||_oo ||f*f||_1)`` is homogeneous of degree
zero in ``v`` and is unchanged by repeating every entry (a dilation of f).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels

__all__ = [
    "InvalidHeightsError",
    "AutoconvProfile",
    "ScoreBreakdown",
    "GradientVector",
    "as_heights",
    "autoconv_samples",
    "l1_norm",
    "linf_norm",
    "l2sq_norm",
    "score",
    "ratio",
    "score_batch",
    "gradient",
    "normalize_sum",
    "upscale_repeat",
]


class InvalidHeightsError(ValueError):
    """Raised for empty, negative, non-finite or all-zero height vectors."""


@dataclass(frozen=True)
class AutoconvProfile:
    """Samples ``L[0..2N]`` of the autoconvolution at the integers."""

    samples: np.ndarray
    source_len: int


@dataclass(frozen=True)
class ScoreBreakdown:
    l2sq: float
    linf: float
    l1: float
    argmax_index: int
    ratio: float

    def as_dict(self) -> dict:
        return {
            "l2sq": self.l2sq,
            "linf": self.linf,
            "l1": self.l1,
            "argmax_index": self.argmax_index,
            "ratio": self.ratio,
        }


@dataclass(frozen=True)
class GradientVector:
    """Gradient of the ratio with the argmax sample index held fixed."""

    partials: np.ndarray
    frozen_argmax: int


def as_heights(v, *, allow_zero: bool = False) -> np.ndarray:
    """Validate ``v`` and return it as a contiguous float64 array (a copy)."""
    arr = np.array(v, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise InvalidHeightsError("height vector is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidHeightsError("height vector has non-finite entries")
    if np.any(arr < 0):
        bad = int(np.flatnonzero(arr < 0)[0])
        raise InvalidHeightsError(f"negative height at index {bad}: {arr[bad]!r}")
    if not allow_zero and not np.any(arr > 0):
        raise InvalidHeightsError("all heights are zero; the ratio is 0/0")
    return np.ascontiguousarray(arr)


def autoconv_samples(v) -> AutoconvProfile:
    arr = as_heights(v, allow_zero=True)
    return AutoconvProfile(samples=kernels.profile(arr), source_len=arr.size)


def l1_norm(v) -> float:
    """``||f*f||_1 = (sum v)^2``."""
    arr = as_heights(v, allow_zero=True)
    return float(np.sum(arr)) ** 2


def linf_norm(p: AutoconvProfile) -> tuple[float, int]:
    """Peak of ``f*f`` and the smallest sample index attaining it.

    A piecewise-linear function attains its maximum at a node, so the max
    over the samples is the exact sup norm.
    """
    j = int(np.argmax(p.samples))
    return float(p.samples[j]), j


def l2sq_norm(p: AutoconvProfile) -> float:
    L = p.samples
    a, b = L[:-1], L[1:]
    return float(np.sum(a * a + a * b + b * b)) / 3.0


def _trapezoid_l1(p: AutoconvProfile) -> float:
    L = p.samples
    return 0.5 * float(np.sum(L[:-1] + L[1:]))


def score(v) -> ScoreBreakdown:
    """Full breakdown of the ratio for the step function with heights ``v``.

    The L1 norm used in the ratio is the trapezoid sum of the samples; it is
    checked against ``(sum v)^2``.
    """
    arr = as_heights(v)
    l2sq, linf, jm, l1 = kernels.score_parts(arr)
    mass = float(np.sum(arr)) ** 2
    if not math.isclose(l1, mass, rel_tol=1e-9):
        raise AssertionError(f"L1 identity violated: trapezoid {l1!r} vs (sum v)^2 {mass!r}")
    return ScoreBreakdown(l2sq=l2sq, linf=linf, l1=l1, argmax_index=jm, ratio=l2sq / (linf * l1))


def ratio(v) -> float:
    """Just the ratio; skips validation beyond what the kernel needs."""
    arr = np.ascontiguousarray(v, dtype=np.float64)
    l2sq, linf, _, l1 = kernels.score_parts(arr)
    return l2sq / (linf * l1)


def score_batch(X, threads: int = 1) -> np.ndarray:
    """Ratios of every row of a 2-D array of (nonnegative, nonzero) rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("score_batch expects a 2-D array")
    return kernels.score_batch(X, int(threads))


def gradient(v) -> GradientVector:
    """Analytic gradient of the ratio.

    The max over samples is nonsmooth where the peak is shared. The smallest
    argmax index is frozen and the resulting smooth quotient differentiated;
    off ties this is the true gradient.
    """
    arr = as_heights(v)
    g, jm, _ = kernels.gradient(arr)
    return GradientVector(partials=g, frozen_argmax=jm)


def normalize_sum(v) -> np.ndarray:
    arr = as_heights(v)
    return arr / np.sum(arr)


def upscale_repeat(v, factor: int) -> np.ndarray:
    """Repeat every height ``factor`` times: the same function, dilated."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upscale factor must be a positive integer, got {factor!r}")
    arr = as_heights(v, allow_zero=True)
    return np.repeat(arr, int(factor))
