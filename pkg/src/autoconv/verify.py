"""Independent re-evaluation of coefficient lists.

Three routes to the same ratio are compared:

* the float64 closed form in :mod:`autoconv.evaluation`,
* :func:`exact_score`, which runs the same closed form in exact rational
  arithmetic (decimal inputs scaled to integers, then big-integer sums),
* :func:`quadrature_score`, which samples ``f*f`` densely and integrates with
  composite Simpson / trapezoid rules.

The module also rescales step functions to support [-1/4, 1/4] with unit
autoconvolution peak and measures the cosine similarity of two such
autoconvolutions exactly, by merging their breakpoint grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import evaluation as ev

FLOAT_VS_EXACT_TOL = 1e-9
QUADRATURE_TOL = 1e-8
DEFAULT_NODES = 10_000


@dataclass(frozen=True)
class ExactScore:
    ratio: Fraction
    l2sq: Fraction
    linf: Fraction
    l1: Fraction
    argmax_index: int

    def decimal(self, digits: int = 15) -> str:
        """Decimal expansion of the ratio truncated (not rounded) to ``digits`` places."""
        return truncate_decimal(self.ratio, digits)


def truncate_decimal(x: Fraction, digits: int) -> str:
    sign = "-" if x < 0 else ""
    x = abs(x)
    scaled = x.numerator * 10**digits // x.denominator
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}" if digits else f"{sign}{whole}"


def _to_fractions(v) -> list[Fraction]:
    # floats convert at their exact binary value
    out = [Fraction(x) for x in v]
    if not out:
        raise ev.InvalidHeightsError("height vector is empty")
    if any(x < 0 for x in out):
        raise ev.InvalidHeightsError("negative height")
    if not any(out):
        raise ev.InvalidHeightsError("all heights are zero; the ratio is 0/0")
    return out


def exact_score(v: Sequence) -> ExactScore:
    """The ratio in exact rational arithmetic.

    Accepts ints, Fractions, decimal strings, or floats (taken at their exact
    binary value). The ratio is scale-free, so heights are multiplied by the
    lcm of their denominators and all sums run over Python integers.
    """
    fr = _to_fractions(v)
    den = 1
    for x in fr:
        den = den * x.denominator // math.gcd(den, x.denominator)
    a = [x.numerator * (den // x.denominator) for x in fr]
    n = len(a)
    L = [0] * (2 * n + 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, aj in enumerate(a):
            L[i + j + 1] += ai * aj
    s2 = 0
    for j in range(2 * n):
        p, q = L[j], L[j + 1]
        s2 += p * p + p * q + q * q
    peak = max(L)
    jm = L.index(peak)
    mass = sum(L)
    d2 = den * den
    return ExactScore(
        ratio=Fraction(s2, 3 * peak * mass),
        l2sq=Fraction(s2, 3 * d2 * d2),
        linf=Fraction(peak, d2),
        l1=Fraction(mass, d2),
        argmax_index=jm,
    )


def _brute_samples(v: np.ndarray) -> np.ndarray:
    # every pair (n, m) contributes v_n v_m to the sample at n + m + 1
    n = v.size
    idx = np.add.outer(np.arange(n), np.arange(n)).ravel() + 1
    L = np.zeros(2 * n + 1)
    np.add.at(L, idx, np.outer(v, v).ravel())
    return L


def quadrature_score(v, nodes_per_interval: int = DEFAULT_NODES) -> float:
    """Ratio from dense sampling of ``f*f`` on every unit interval.

    ``(f*f)^2`` is integrated by composite Simpson, ``f*f`` by the trapezoid
    rule, and the sup is taken over the nodes. An odd node count is bumped to
    the next even one (Simpson needs an even number of panels).
    """
    if nodes_per_interval < 2:
        raise ValueError("nodes_per_interval must be >= 2")
    m = nodes_per_interval + (nodes_per_interval % 2)
    arr = ev.as_heights(v)
    L = _brute_samples(arr)
    t = np.linspace(0.0, 1.0, m + 1)
    w_simp = np.ones(m + 1)
    w_simp[1:-1:2] = 4.0
    w_simp[2:-1:2] = 2.0
    w_simp *= 1.0 / (3.0 * m)
    w_trap = np.full(m + 1, 1.0 / m)
    w_trap[[0, -1]] = 0.5 / m
    l2sq = l1 = 0.0
    peak = 0.0
    intervals = 2 * arr.size
    block = max(1, 2_000_000 // (m + 1))
    for start in range(0, intervals, block):
        stop = min(intervals, start + block)
        lo = L[start:stop, None]
        hi = L[start + 1:stop + 1, None]
        vals = lo + (hi - lo) * t[None, :]
        l2sq += float(np.sum((vals * vals) @ w_simp))
        l1 += float(np.sum(vals @ w_trap))
        peak = max(peak, float(vals.max()))
    return l2sq / (peak * l1)


# -- presentation normalization and correlation ------------------------------

@dataclass(frozen=True)
class NormalizedStepFunction:
    """``F(x) = f(2N x + N/2) / sqrt(peak_scale)`` on [-1/4, 1/4].

    Each original step has width ``1/(2N)``; ``peak_scale`` is the sup of the
    autoconvolution of ``f(2N x + N/2)`` so ``F*F`` peaks at exactly 1.
    """

    heights: np.ndarray
    source: np.ndarray
    peak_scale: float
    support: tuple = field(default=(-0.25, 0.25))

    @property
    def n(self) -> int:
        return self.heights.size

    def autoconv_nodes(self, reflect: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``x_j = (j - N)/(2N)`` and values of ``F*F`` (piecewise linear)."""
        n = self.n
        L = ev.autoconv_samples(self.source).samples
        y = L / np.max(L)
        x = (np.arange(2 * n + 1) - n) / (2 * n)
        if reflect:
            return -x[::-1], y[::-1]
        return x, y


def normalize_presentation(v) -> NormalizedStepFunction:
    arr = ev.as_heights(v)
    n = arr.size
    peak = ev.linf_norm(ev.autoconv_samples(arr))[0]
    # dilation by a = 2N scales the autoconvolution by 1/a
    peak_scale = peak / (2 * n)
    return NormalizedStepFunction(heights=arr / math.sqrt(peak_scale), source=arr, peak_scale=peak_scale)


def _grid(n: int, den: int) -> np.ndarray:
    # node positions (j - n)/(2n) expressed as integers over the common denominator
    return (np.arange(2 * n + 1, dtype=np.int64) - n) * (den // (2 * n))


def correlation(a: NormalizedStepFunction, b: NormalizedStepFunction, reflect_b: bool = False) -> float:
    """Cosine similarity of ``a*a`` and ``b*b`` (optionally ``x -> -x`` on the latter).

    Both are piecewise linear; on the merged breakpoint grid the products
    are quadratics, integrated exactly.
    """
    den = math.lcm(2 * a.n, 2 * b.n)
    _, ya = a.autoconv_nodes()
    _, yb = b.autoconv_nodes()
    xa = _grid(a.n, den)
    xb = _grid(b.n, den)
    if reflect_b:
        xb, yb = -xb[::-1], yb[::-1]
    merged = np.union1d(xa, xb)
    fa = np.interp(merged, xa, ya)
    fb = np.interp(merged, xb, yb)
    h = np.diff(merged) / den

    def inner(p, q):
        p0, p1, q0, q1 = p[:-1], p[1:], q[:-1], q[1:]
        return float(np.sum(h * (2 * p0 * q0 + p0 * q1 + p1 * q0 + 2 * p1 * q1)) / 6.0)

    return inner(fa, fb) / math.sqrt(inner(fa, fa) * inner(fb, fb))


# -- report -----------------------------------------------------------------

@dataclass
class VerificationReport:
    n: int
    float_score: ev.ScoreBreakdown
    exact: ExactScore | None
    quadrature: float
    nodes_per_interval: int
    deltas: dict
    ok: bool
    failures: list

    def as_dict(self) -> dict:
        d = {
            "n": self.n,
            "float": self.float_score.as_dict(),
            "quadrature_ratio": self.quadrature,
            "nodes_per_interval": self.nodes_per_interval,
            "deltas": self.deltas,
            "ok": self.ok,
            "failures": self.failures,
        }
        if self.exact is not None:
            d["exact"] = {
                "ratio": f"{self.exact.ratio.numerator}/{self.exact.ratio.denominator}",
                "ratio_decimal": self.exact.decimal(20),
                "l2sq": float(self.exact.l2sq),
                "linf": float(self.exact.linf),
                "l1": float(self.exact.l1),
                "argmax_index": self.exact.argmax_index,
            }
        return d

    def as_text(self) -> str:
        f = self.float_score
        lines = [
            f"N                 {self.n}",
            f"||f*f||_2^2       {f.l2sq:.12g}",
            f"||f*f||_inf       {f.linf:.12g}  (sample index {f.argmax_index})",
            f"||f*f||_1         {f.l1:.12g}",
            f"ratio (float64)   {f.ratio:.12f}",
        ]
        if self.exact is not None:
            lines.append(f"ratio (exact)     {self.exact.decimal(15)}...")
        lines.append(f"ratio (Simpson)   {self.quadrature:.12f}  ({self.nodes_per_interval} nodes/interval)")
        for k, val in self.deltas.items():
            lines.append(f"delta {k:<12}{val:.3e}")
        lines.append("status            " + ("OK" if self.ok else "FAIL: " + "; ".join(self.failures)))
        return "\n".join(lines)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b))


def verify(v_float, v_exact=None, nodes_per_interval: int = DEFAULT_NODES) -> VerificationReport:
    """Evaluate by all three routes and check pairwise agreement.

    ``v_exact`` (rationals parsed from the decimal text) is the ground truth
    when given; otherwise the float heights are used at their exact binary
    value.
    """
    arr = ev.as_heights(v_float)
    fs = ev.score(arr)
    ex = exact_score(v_exact if v_exact is not None else arr)
    quad = quadrature_score(arr, nodes_per_interval)
    exf = float(ex.ratio)
    deltas = {
        "float-exact": _rel(fs.ratio, exf),
        "quad-exact": _rel(quad, exf),
        "float-quad": _rel(fs.ratio, quad),
    }
    failures = []
    if deltas["float-exact"] > FLOAT_VS_EXACT_TOL:
        failures.append(f"float vs exact differ by {deltas['float-exact']:.3e} > {FLOAT_VS_EXACT_TOL:g}")
    if deltas["quad-exact"] > QUADRATURE_TOL:
        failures.append(f"quadrature vs exact differ by {deltas['quad-exact']:.3e} > {QUADRATURE_TOL:g}")
    if deltas["float-quad"] > QUADRATURE_TOL:
        failures.append(f"float vs quadrature differ by {deltas['float-quad']:.3e} > {QUADRATURE_TOL:g}")
    return VerificationReport(
        n=arr.size, float_score=fs, exact=ex, quadrature=quad, nodes_per_interval=nodes_per_interval,
        deltas=deltas, ok=not failures, failures=failures,
    )
