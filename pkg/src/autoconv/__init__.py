"""Autoconvolution Hölder ratio ``||f*f||_2^2 / (||f*f||_oo ||f*f||_1)`` for
nonnegative step functions: closed-form evaluation, search, verification."""
from ._backend import compiled as HAVE_COMPILED_KERNELS
from .evaluation import (
    AutoconvProfile,
    GradientVector,
    InvalidHeightsError,
    ScoreBreakdown,
    autoconv_samples,
    gradient,
    l1_norm,
    l2sq_norm,
    linf_norm,
    normalize_sum,
    score,
    upscale_repeat,
)

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED_KERNELS",
    "AutoconvProfile",
    "GradientVector",
    "InvalidHeightsError",
    "ScoreBreakdown",
    "autoconv_samples",
    "gradient",
    "l1_norm",
    "l2sq_norm",
    "linf_norm",
    "normalize_sum",
    "score",
    "upscale_repeat",
]
