"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json]

Times batch scoring, one gradient evaluation and one gradient stream at the
ladder sizes. Reports the best of ``--repeat`` runs per case.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from autoconv import _fallback
from autoconv._backend import compiled, kernels

SIZES = (23, 115, 575)


def cases(n: int, rng: np.random.Generator):
    X = rng.random((64, n))
    v = rng.random(n)
    return {
        "score_batch[64]": lambda k: k.score_batch(X, 1),
        "gradient": lambda k: k.gradient(v),
        "gradient_stream[200]": lambda k: k.gradient_stream(v, 3, 200, 0.01, 0.25, 1 / 3, -1, 1e-14),
    }


def best_time(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if not compiled:
        print("compiled kernels unavailable; only the fallback can be timed", file=sys.stderr)
    backends = {"numpy": _fallback}
    if compiled:
        backends["cython"] = kernels
    rng = np.random.default_rng(0)
    rows = []
    for n in SIZES:
        for name, fn in cases(n, rng).items():
            row = {"n": n, "case": name}
            for label, k in backends.items():
                row[label] = best_time(lambda: fn(k), args.repeat)
            if compiled:
                row["speedup"] = row["numpy"] / row["cython"]
            rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=1))
        return 0
    print(f"{'N':>5}  {'case':<22}{'numpy':>12}{'cython':>12}{'speedup':>9}")
    for r in rows:
        cy = f"{r['cython'] * 1e6:10.1f}us" if "cython" in r else f"{'-':>12}"
        sp = f"{r['speedup']:8.1f}x" if "speedup" in r else f"{'-':>9}"
        print(f"{r['n']:>5}  {r['case']:<22}{r['numpy'] * 1e6:10.1f}us{cy}{sp}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
