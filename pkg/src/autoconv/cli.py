"""Command-line interface.

Exit codes::

    0  success
    2  coefficient file could not be parsed (or bad usage)
    3  coefficients parse but do not form a valid height vector
    4  invalid optimizer configuration
    5  checkpoint corrupt, truncated, or from another version
    6  verification oracles disagree
    7  output path not writable
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation as ev
from . import iofmt
from . import optimizer as op
from . import verify as vf
from ._backend import kernels

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_CONFIG = 4
EXIT_CHECKPOINT = 5
EXIT_ORACLE = 6
EXIT_OUTPUT = 7

THREADS_ENV = "AUTOCONV_THREADS"

log = logging.getLogger("autoconv")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(path: str, exact: bool = False):
    try:
        if exact:
            return iofmt.read_coefficients(path), iofmt.read_coefficients_exact(path)
        return iofmt.read_coefficients(path)
    except iofmt.CoefficientParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    except ev.InvalidHeightsError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID) from None
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_PARSE) from None


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _writable(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise CliError(f"cannot write to {path}", EXIT_OUTPUT)


# -- subcommands --------------------------------------------------------------

def cmd_score(args) -> int:
    v = _load(args.coefficients)
    sb = ev.score(v)
    text = "\n".join([
        f"N            {v.size}",
        f"ratio        {sb.ratio:.12f}",
        f"l2sq         {sb.l2sq:.12g}",
        f"linf         {sb.linf:.12g}",
        f"l1           {sb.l1:.12g}",
        f"argmax_index {sb.argmax_index}",
    ])
    _emit(args, {"n": int(v.size), **sb.as_dict()}, text)
    return EXIT_OK


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1") or 1))


def _finish_run(args, state: op.RunCheckpoint, out: str, ckpt: str) -> int:
    best = state.best
    iofmt.write_coefficients(best, out, comment=f"score {state.best_score!r} seed {state.config.seed}")
    _emit(args, {"score": state.best_score, "n": int(best.size), "out": out, "checkpoint": ckpt,
                 "stages": state.stage_scores},
          f"best score {state.best_score:.12f} (N={best.size}) written to {out}")
    return EXIT_OK


def _run(args, cfg: op.PipelineConfig, resume: op.RunCheckpoint | None, out: str, ckpt: str) -> int:
    _writable(out)
    _writable(ckpt)
    events_fh = open(args.events, "a", encoding="utf-8") if args.events else None

    def events(ev_: dict) -> None:
        if events_fh is not None:
            events_fh.write(json.dumps(ev_, sort_keys=True) + "\n")
            events_fh.flush()

    meta = {"out": out, "checkpoint": ckpt}

    def sink(cp: op.RunCheckpoint) -> None:
        cp.meta = meta
        iofmt.write_checkpoint(cp, ckpt)

    try:
        state = op.run_pipeline(cfg, sink, resume_from=resume, threads=_threads(args), events=events)
    finally:
        if events_fh is not None:
            events_fh.close()
    return _finish_run(args, state, out, ckpt)


def cmd_optimize(args) -> int:
    try:
        if args.config:
            cfg = iofmt.load_config(args.config)
        else:
            cfg = op.preset(args.preset)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.checkpoint_every is not None:
            cfg.checkpoint_every = args.checkpoint_every
        cfg.validate()
    except OSError as exc:
        raise CliError(f"{args.config}: {exc.strerror or exc}", EXIT_CONFIG) from None
    except op.ConfigError as exc:
        raise CliError(f"invalid config: {exc}", EXIT_CONFIG) from None
    out = args.out or "best_coefficients.txt"
    ckpt = args.checkpoint or out + ".ckpt.json"
    return _run(args, cfg, None, out, ckpt)


def cmd_resume(args) -> int:
    try:
        cp = iofmt.read_checkpoint(args.checkpoint)
    except iofmt.CheckpointError as exc:
        raise CliError(f"{args.checkpoint}: {exc}", EXIT_CHECKPOINT) from None
    except OSError as exc:
        raise CliError(f"{args.checkpoint}: {exc.strerror or exc}", EXIT_CHECKPOINT) from None
    out = args.out or cp.meta.get("out") or "best_coefficients.txt"
    if cp.done:
        _writable(out)
        return _finish_run(args, cp, out, args.checkpoint)
    return _run(args, cp.config, cp, out, args.checkpoint)


def cmd_verify(args) -> int:
    v, exact = _load(args.coefficients, exact=True)
    report = vf.verify(v, exact, nodes_per_interval=args.nodes)
    _emit(args, report.as_dict(), report.as_text())
    if not report.ok:
        print("verification failed: " + "; ".join(report.failures), file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_compare(args) -> int:
    a = vf.normalize_presentation(_load(args.coefficients_a))
    b = vf.normalize_presentation(_load(args.coefficients_b))
    c = vf.correlation(a, b, reflect_b=args.reflect)
    _emit(args, {"correlation": c, "reflect": bool(args.reflect), "n_a": a.n, "n_b": b.n}, f"{c:.6f}")
    return EXIT_OK


def cmd_export_plot(args) -> int:
    v = _load(args.coefficients)
    pts = iofmt.export_plot(v, kind=args.kind, normalized=args.normalized)
    if args.out in (None, "-"):
        sys.stdout.write(iofmt.format_plot_csv(pts))
        return EXIT_OK
    _writable(args.out)
    try:
        iofmt.write_plot_csv(pts, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc.strerror or exc}", EXIT_OUTPUT) from None
    if args.json:
        print(json.dumps({"out": args.out, "rows": len(pts), "kind": args.kind, "normalized": args.normalized}))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autoconv", description="Autoconvolution Hölder ratio of step functions.")
    p.add_argument("--json", action="store_true", help="print one JSON object on stdout")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS)

    s = sub.add_parser("score", help="evaluate the ratio of a coefficient file")
    s.add_argument("coefficients")
    common(s)
    s.set_defaults(func=cmd_score)

    def run_opts(sp):
        sp.add_argument("--out", help="where to write the best coefficients")
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--events", help="append JSON-lines progress events to this file")
        common(sp)

    s = sub.add_parser("optimize", help="run the search pipeline")
    s.add_argument("--config", help="JSON run config (overrides --preset)")
    s.add_argument("--preset", choices=["full", "desk", "smoke"], default="desk")
    s.add_argument("--seed", type=int)
    s.add_argument("--checkpoint", help="checkpoint path (default <out>.ckpt.json)")
    s.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    run_opts(s)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("resume", help="continue a run from its checkpoint")
    s.add_argument("checkpoint")
    run_opts(s)
    s.set_defaults(func=cmd_resume)

    s = sub.add_parser("verify", help="exact, float and quadrature evaluation with cross-checks")
    s.add_argument("coefficients")
    s.add_argument("--nodes", type=int, default=vf.DEFAULT_NODES, help="quadrature nodes per unit interval")
    common(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("compare", help="correlation of two normalized autoconvolutions")
    s.add_argument("coefficients_a")
    s.add_argument("coefficients_b")
    s.add_argument("--reflect", action="store_true", help="compare against the mirror image x -> -x (same value whichever file is mirrored)")
    common(s)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("export-plot", help="write plot data as CSV (x,value)")
    s.add_argument("coefficients")
    s.add_argument("--kind", choices=["step", "autoconv"], default="autoconv")
    s.add_argument("--normalized", action="store_true", help="support [-1/4,1/4], autoconvolution peak 1")
    s.add_argument("--out", help="output CSV (default stdout)")
    common(s)
    s.set_defaults(func=cmd_export_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    log.debug("kernel backend: %s", kernels.NAME)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"autoconv: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
