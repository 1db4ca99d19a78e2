"""File formats: coefficient lists, run configs, checkpoints, plot data.

Coefficient files are UTF-8 text with one or more decimal numbers per line
(whitespace or comma separated), ``#`` comments, and an optional ``n=<N>``
header. Multi-column tables are read row by row. Floats are written with 17
significant digits, which round-trips every float64 exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from . import evaluation as ev
from .optimizer import ConfigError, PipelineConfig, RunCheckpoint

CHECKPOINT_FORMAT = "autoconv-checkpoint"
CHECKPOINT_VERSION = 1

Source = Union[str, os.PathLike, io.TextIOBase]

_HEADER = re.compile(r"^\s*n\s*=\s*(\d+)\s*$", re.IGNORECASE)
_SPLIT = re.compile(r"[\s,]+")


class CoefficientParseError(ValueError):
    """Malformed coefficient file. ``line`` is 1-based, or None."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CheckpointError(ValueError):
    """Checkpoint is truncated, from an unknown version, or fails its integrity check."""


def fmt_float(x: float) -> str:
    return "%.17g" % x


def _read_text(source: Source) -> str:
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source.read()
    return Path(source).read_text(encoding="utf-8")


def read_coefficient_tokens(source: Source) -> list[str]:
    """Numeric tokens in file order, validated as nonnegative decimals.

    Raises:
        CoefficientParseError: on a malformed or negative number, an empty
            file, or a count that disagrees with the ``n=`` header.
    """
    text = _read_text(source)
    tokens: list[str] = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            if declared is not None or tokens:
                raise CoefficientParseError("n= header must come before any value", lineno)
            declared = int(m.group(1))
            continue
        for tok in _SPLIT.split(line):
            if not tok:
                continue
            try:
                val = float(tok)
                Fraction(tok)
            except (ValueError, ZeroDivisionError):
                raise CoefficientParseError(f"malformed number {tok!r}", lineno) from None
            if not math.isfinite(val):
                raise CoefficientParseError(f"non-finite value {tok!r}", lineno)
            if val < 0:
                raise CoefficientParseError(f"negative height {tok!r}", lineno)
            tokens.append(tok)
    if not tokens:
        raise CoefficientParseError("no coefficients found (empty file)")
    if declared is not None and declared != len(tokens):
        raise CoefficientParseError(f"header declares n={declared} but {len(tokens)} values were read")
    return tokens


def read_coefficients(source: Source) -> np.ndarray:
    """Heights as a validated float64 array.

    Raises ``CoefficientParseError`` for format problems and
    ``evaluation.InvalidHeightsError`` if every height is zero.
    """
    return ev.as_heights([float(t) for t in read_coefficient_tokens(source)])


def read_coefficients_exact(source: Source) -> list[Fraction]:
    """Heights as exact rationals, straight from the decimal text."""
    fr = [Fraction(t) for t in read_coefficient_tokens(source)]
    if not any(fr):
        raise ev.InvalidHeightsError("all heights are zero; the ratio is 0/0")
    return fr


def format_coefficients(v: Iterable[float], comment: str | None = None) -> str:
    vals = [float(x) for x in v]
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"n={len(vals)}")
    lines += [fmt_float(x) for x in vals]
    return "\n".join(lines) + "\n"


def atomic_write_text(path: Union[str, os.PathLike], text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_coefficients(v, path, comment: str | None = None) -> None:
    atomic_write_text(path, format_coefficients(v, comment))


# -- configs ----------------------------------------------------------------

def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(source: Source) -> PipelineConfig:
    try:
        data = json.loads(_read_text(source))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return PipelineConfig.from_dict(data)


# -- checkpoints ------------------------------------------------------------

def _vec(v):
    return None if v is None else [float(x) for x in v]


def checkpoint_to_dict(cp: RunCheckpoint) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cp.config.to_dict(),
        "stage": cp.stage,
        "phase": cp.phase,
        "counters": {"repeat": cp.repeat, "k": cp.k, "s": cp.s, "i": cp.i},
        "scale": cp.scale,
        "current": _vec(cp.current),
        "current_score": cp.current_score,
        "best": _vec(cp.best),
        "best_score": cp.best_score,
        "rng": cp.rng,
        "stage_scores": cp.stage_scores,
        "done": cp.done,
        "meta": cp.meta,
    }


def dump_checkpoint(cp: RunCheckpoint) -> str:
    return json.dumps(checkpoint_to_dict(cp), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _check_score(vec, stored, name):
    if vec is None:
        if stored is not None:
            raise CheckpointError(f"{name}_score present without a vector")
        return None
    arr = np.asarray(vec, dtype=np.float64)
    try:
        fresh = ev.score(arr).ratio
    except ev.InvalidHeightsError as exc:
        raise CheckpointError(f"stored {name} vector is invalid: {exc}") from None
    if stored is None or abs(fresh - stored) > 1e-9:
        raise CheckpointError(f"{name} score {stored!r} does not match re-evaluation {fresh!r}")
    return arr


def parse_checkpoint(text: str) -> RunCheckpoint:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is truncated or corrupt: {exc}") from None
    if not isinstance(d, dict) or d.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not an autoconv checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {d.get('version')!r}")
    try:
        cfg = PipelineConfig.from_dict(d["config"])
        c = d["counters"]
        cp = RunCheckpoint(
            config=cfg,
            stage=int(d["stage"]),
            phase=str(d["phase"]),
            repeat=int(c["repeat"]),
            k=int(c["k"]),
            s=int(c["s"]),
            i=int(c["i"]),
            scale=d["scale"],
            current=_check_score(d["current"], d["current_score"], "current"),
            current_score=d["current_score"],
            best=_check_score(d["best"], d["best_score"], "best"),
            best_score=d["best_score"],
            rng=dict(d["rng"]),
            stage_scores=list(d["stage_scores"]),
            done=bool(d["done"]),
            meta=dict(d.get("meta") or {}),
        )
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint is missing fields: {exc}") from None
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint config invalid: {exc}") from None
    return cp


def write_checkpoint(cp: RunCheckpoint, path) -> None:
    atomic_write_text(path, dump_checkpoint(cp))


def read_checkpoint(path) -> RunCheckpoint:
    return parse_checkpoint(_read_text(path))


# -- plot export ------------------------------------------------------------

def export_plot(v, kind: str = "autoconv", normalized: bool = False) -> list[tuple[float, float]]:
    """Polyline points for the step function or its autoconvolution.

    ``step`` gives the 2N staircase corners ``(x_n, v_n), (x_{n+1}, v_n)``;
    ``autoconv`` gives the 2N+1 interpolation nodes. Normalized exports live
    on [-1/4, 1/4] and [-1/2, 1/2] with autoconvolution peak 1.
    """
    from .verify import normalize_presentation

    arr = ev.as_heights(v)
    n = arr.size
    if kind == "step":
        if normalized:
            heights = normalize_presentation(arr).heights
            edges = (np.arange(n + 1) - n / 2) / (2 * n)
        else:
            heights = arr
            edges = np.arange(n + 1, dtype=np.float64)
        pts = []
        for i in range(n):
            pts.append((float(edges[i]), float(heights[i])))
            pts.append((float(edges[i + 1]), float(heights[i])))
        return pts
    if kind == "autoconv":
        L = ev.autoconv_samples(arr).samples
        if normalized:
            x = (np.arange(2 * n + 1) - n) / (2 * n)
            y = L / np.max(L)
        else:
            x = np.arange(2 * n + 1, dtype=np.float64)
            y = L
        return [(float(a), float(b)) for a, b in zip(x, y)]
    raise ValueError(f"unknown plot kind {kind!r} (expected step or autoconv)")


def format_plot_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "value"])
    for x, y in points:
        w.writerow([fmt_float(x), fmt_float(y)])
    return buf.getvalue()


def write_plot_csv(points, path) -> None:
    atomic_write_text(path, format_plot_csv(points))


def read_plot_csv(source: Source) -> list[tuple[float, float]]:
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or rows[0] != ["x", "value"]:
        raise ValueError("plot CSV must start with the header x,value")
    return [(float(a), float(b)) for a, b in rows[1:]]
