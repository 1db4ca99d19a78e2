"""Search for step functions with a large autoconvolution Hölder ratio.

The pipeline climbs a ladder of resolutions (23 -> 115 -> 575 by default):

1. At the first resolution a random vector is improved by batch random
   perturbation: candidates ``|best + S * xi|`` with ``xi ~ U(-1/2, 1/2)``,
   first with a large, slowly decaying scale (coarse), then repeatedly with a
   small one (fine).
2. The winner is upscaled by repeating every entry, which leaves the score
   unchanged, and refined by a sequence of gradient streams. Stream ``s``
   takes normalized gradient steps of length
   ``base_step / ((i + 1)^(1/4) (s + 1)^(1/3)) * (1 - Q)`` and clamps
   negative entries to zero. Each stream starts where the previous one ended.
3. Intermediate resolutions get another perturbation pass before the next
   upscale.

All randomness is derived from ``(seed, stage, repeat, k)`` so a run is
reproducible bit for bit, independent of thread count, and resumable from
any checkpoint.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import evaluation as ev

log = logging.getLogger(__name__)

GRAD_EPS = 1e-14
_INIT_KEY = 0x1A17


class ConfigError(ValueError):
    """Invalid optimizer configuration."""


def normalize_max(v) -> np.ndarray:
    """Scale so the largest height is 1 (a point of the unit hypercube)."""
    arr = ev.as_heights(v)
    return arr / np.max(arr)


# The perturbation scale is absolute, so the choice matters for the search
# even though the score is scale-free: "max" keeps entries O(1).
NORMALIZATIONS = {"max": normalize_max, "sum": ev.normalize_sum}


@dataclass
class PerturbPhaseConfig:
    initial_scale: float
    decay: float
    iterations: int
    batch_size: int = 64
    repeats: int = 1
    normalization: str = "sum"

    def validate(self) -> None:
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {sorted(NORMALIZATIONS)}, got {self.normalization!r}")
        if not (self.initial_scale >= 0 and math.isfinite(self.initial_scale)):
            raise ConfigError(f"initial_scale must be finite and >= 0, got {self.initial_scale!r}")
        if not 0 < self.decay <= 1:
            raise ConfigError(f"decay must lie in (0, 1], got {self.decay!r}")
        for name in ("iterations", "batch_size", "repeats"):
            val = getattr(self, name)
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {val!r}")


@dataclass
class GradientPhaseConfig:
    streams: int = 1_000_000
    steps_per_stream: int = 1000
    base_step: float = 0.01
    iter_exponent: float = 0.25
    stream_exponent: float = 1.0 / 3.0
    rounding_digits: Optional[int] = None

    def validate(self) -> None:
        for name in ("streams", "steps_per_stream"):
            val = getattr(self, name)
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {val!r}")
        if not self.base_step > 0:
            raise ConfigError(f"base_step must be > 0, got {self.base_step!r}")
        if self.rounding_digits is not None and (not isinstance(self.rounding_digits, int)
                                                 or self.rounding_digits < 0):
            raise ConfigError("rounding_digits must be a nonnegative integer or null")

    def step_length(self, i: int, s: int, q: float) -> float:
        return self.base_step / ((i + 1) ** self.iter_exponent * (s + 1) ** self.stream_exponent) * (1.0 - q)


def _coarse_default() -> PerturbPhaseConfig:
    return PerturbPhaseConfig(initial_scale=25.0, decay=0.999, iterations=1000, batch_size=64, repeats=1)


def _fine_default() -> PerturbPhaseConfig:
    return PerturbPhaseConfig(initial_scale=0.05, decay=0.99998, iterations=1000, batch_size=64, repeats=400)


@dataclass
class PipelineConfig:
    n_ladder: list = field(default_factory=lambda: [23, 115, 575])
    upscale_factor: int = 5
    coarse: PerturbPhaseConfig = field(default_factory=_coarse_default)
    fine: PerturbPhaseConfig = field(default_factory=_fine_default)
    gradient: GradientPhaseConfig = field(default_factory=GradientPhaseConfig)
    seed: int = 0
    checkpoint_every: int = 100

    def validate(self) -> None:
        if not self.n_ladder or any(not isinstance(n, int) or n < 1 for n in self.n_ladder):
            raise ConfigError(f"n_ladder must be a nonempty list of positive integers, got {self.n_ladder!r}")
        if not isinstance(self.upscale_factor, int) or self.upscale_factor < 1:
            raise ConfigError(f"upscale_factor must be a positive integer, got {self.upscale_factor!r}")
        for a, b in zip(self.n_ladder, self.n_ladder[1:]):
            if b != a * self.upscale_factor:
                raise ConfigError(f"ladder step {a} -> {b} is not a factor-{self.upscale_factor} upscale")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.checkpoint_every, int) or self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be an integer >= 1")
        self.coarse.validate()
        self.fine.validate()
        self.gradient.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "coarse" in d:
                d["coarse"] = PerturbPhaseConfig(**d["coarse"])
            if "fine" in d:
                d["fine"] = PerturbPhaseConfig(**d["fine"])
            if "gradient" in d:
                d["gradient"] = GradientPhaseConfig(**d["gradient"])
            if "n_ladder" in d:
                d["n_ladder"] = list(d["n_ladder"])
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg


def preset(name: str, seed: int = 0) -> PipelineConfig:
    """Budget presets.

    ``full`` uses the complete default counts (a multi-day run), ``desk``
    finishes in minutes, ``smoke`` in seconds.
    """
    if name == "full":
        cfg = PipelineConfig(seed=seed, checkpoint_every=1000)
    elif name == "desk":
        cfg = PipelineConfig(
            n_ladder=[23, 115],
            coarse=PerturbPhaseConfig(25.0, 0.999, 1000, 64, 1),
            # max-normalized fine search climbs well past the sum-normalized
            # plateau at small N; the gradient stage re-normalizes to sum
            fine=PerturbPhaseConfig(0.05, 0.99998, 1000, 64, 20, normalization="max"),
            gradient=GradientPhaseConfig(streams=2000, steps_per_stream=1000),
            seed=seed,
            checkpoint_every=100,
        )
    elif name == "smoke":
        cfg = PipelineConfig(
            n_ladder=[23],
            coarse=PerturbPhaseConfig(25.0, 0.999, 100, 16, 1),
            fine=PerturbPhaseConfig(0.05, 0.99998, 100, 16, 2),
            gradient=GradientPhaseConfig(streams=5, steps_per_stream=50),
            seed=seed,
            checkpoint_every=20,
        )
    else:
        raise ConfigError(f"unknown preset {name!r} (expected full, desk or smoke)")
    cfg.validate()
    return cfg


# -- random streams ---------------------------------------------------------

def _generator(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def rng_descriptor(seed: int) -> dict:
    return {
        "bit_generator": "Philox",
        "seed": int(seed),
        "derivation": "SeedSequence([seed, stage, repeat, k]) per perturbation iteration",
    }


# -- phases -----------------------------------------------------------------

def perturb_candidate(best, scale: float, noise) -> np.ndarray:
    """``|best + scale * noise|`` componentwise.

    ``noise`` may also be a 2-D batch, one candidate per row.
    """
    best = np.asarray(best, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if best.ndim != 1 or noise.shape[-1:] != best.shape:
        raise ValueError(f"noise shape {noise.shape} does not match vector shape {best.shape}")
    return np.abs(best + scale * noise)


def _perturb_iteration(best, best_score, scale, batch_size, rng, threads, normalize):
    noise = rng.random((batch_size, best.size)) - 0.5
    cands = perturb_candidate(best, scale, noise)
    scores = ev.score_batch(cands, threads)
    scores[~np.isfinite(scores)] = -np.inf
    j = int(np.argmax(scores))
    if scores[j] > best_score:
        winner = normalize(cands[j])
        return winner, ev.ratio(winner)
    return best, best_score


def perturb_phase(start, cfg: PerturbPhaseConfig, seed: int, *, stage: int = 0,
                  threads: int = 1) -> tuple[np.ndarray, float]:
    """Run ``cfg.repeats`` rounds of ``cfg.iterations`` perturbation steps.

    The incumbent is kept unless a candidate strictly beats it, so the score
    never decreases. The scale restarts at ``initial_scale`` every round.
    The returned vector is normalized per ``cfg.normalization``.
    """
    cfg.validate()
    normalize = NORMALIZATIONS[cfg.normalization]
    best = normalize(start)
    best_score = ev.ratio(best)
    for rep in range(cfg.repeats):
        scale = cfg.initial_scale
        for k in range(cfg.iterations):
            rng = _generator(seed, stage, rep, k)
            best, best_score = _perturb_iteration(best, best_score, scale, cfg.batch_size, rng, threads, normalize)
            scale *= cfg.decay
    return best, best_score


def gradient_step(v: np.ndarray, i: int, s: int, cfg: GradientPhaseConfig) -> np.ndarray:
    """Step ``i`` of stream ``s``, one step at a time (reference path)."""
    g, _, q = ev.kernels.gradient(v)
    norm = float(np.sqrt(np.dot(g, g)))
    if not norm >= GRAD_EPS:
        return v
    nxt = v + cfg.step_length(i, s, q) * (g / norm)
    if cfg.rounding_digits is not None:
        nxt = np.round(nxt, cfg.rounding_digits)
    nxt = np.maximum(nxt, 0.0)
    if not np.any(nxt > 0):
        return v
    return nxt


def gradient_stream(start, s: int, cfg: GradientPhaseConfig) -> tuple[np.ndarray, float]:
    """One stream of ``cfg.steps_per_stream`` projected normalized-gradient steps.

    Steps with a gradient norm below ``GRAD_EPS`` are skipped. The whole
    stream runs inside the kernel.
    """
    if s < 0:
        raise ValueError("stream index must be >= 0")
    v = ev.as_heights(start)
    digits = -1 if cfg.rounding_digits is None else int(cfg.rounding_digits)
    v = ev.kernels.gradient_stream(v, int(s), int(cfg.steps_per_stream), float(cfg.base_step),
                                   float(cfg.iter_exponent), float(cfg.stream_exponent), digits, GRAD_EPS)
    return v, ev.ratio(v)


# -- pipeline ---------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    kind: str  # "coarse" | "fine" | "gradient"
    level: int
    n: int

    @property
    def tag(self) -> str:
        return f"{self.kind}@{self.n}"


def plan(cfg: PipelineConfig) -> list[Stage]:
    """Ordered stages for a ladder.

    Level 0: coarse then fine. Every later level: upscale, gradient streams,
    then (unless it is the last level) coarse and fine again. A one-entry
    ladder ends with gradient streams at its only resolution.
    """
    ladder = cfg.n_ladder
    stages = [Stage("coarse", 0, ladder[0]), Stage("fine", 0, ladder[0])]
    for lvl, n in enumerate(ladder[1:], start=1):
        stages.append(Stage("gradient", lvl, n))
        if lvl < len(ladder) - 1:
            stages += [Stage("coarse", lvl, n), Stage("fine", lvl, n)]
    if len(ladder) == 1:
        stages.append(Stage("gradient", 0, ladder[0]))
    return stages


@dataclass
class RunCheckpoint:
    """Complete resumable state of a pipeline run.

    Counters point at the next unit of work: perturbation round ``repeat``,
    iteration ``k`` (with ``scale`` the scale to use for it), or gradient
    stream ``s``.
    """

    config: PipelineConfig
    stage: int = 0
    phase: str = ""
    repeat: int = 0
    k: int = 0
    s: int = 0
    i: int = 0
    scale: Optional[float] = None
    current: Optional[np.ndarray] = None
    current_score: Optional[float] = None
    best: Optional[np.ndarray] = None
    best_score: Optional[float] = None
    rng: dict = field(default_factory=dict)
    stage_scores: list = field(default_factory=list)
    done: bool = False
    meta: dict = field(default_factory=dict)

    def snapshot(self) -> "RunCheckpoint":
        return replace(
            self,
            current=None if self.current is None else self.current.copy(),
            best=None if self.best is None else self.best.copy(),
            stage_scores=[dict(x) for x in self.stage_scores],
            rng=dict(self.rng),
            meta=dict(self.meta),
        )


Sink = Callable[[RunCheckpoint], None]


class _Runner:
    def __init__(self, state: RunCheckpoint, sink: Optional[Sink], threads: int,
                 events: Optional[Callable[[dict], None]], stop_after: Optional[int]):
        self.st = state
        self.cfg = state.config
        self.stages = plan(self.cfg)
        self.sink = sink
        self.threads = max(1, int(threads))
        self.events = events
        self.units = 0
        self.stop_after = stop_after
        self.sink_errors = 0

    def emit(self, **event) -> None:
        if self.events is not None:
            self.events(event)

    def save(self) -> None:
        if self.sink is None:
            return
        try:
            self.sink(self.st.snapshot())
        except OSError as exc:
            self.sink_errors += 1
            log.error("checkpoint write failed: %s", exc)
            self.emit(event="checkpoint_error", error=str(exc))

    def tick(self) -> bool:
        """Count one unit of work; checkpoint at the cadence. True means stop."""
        self.units += 1
        if self.units % self.cfg.checkpoint_every == 0:
            self.save()
        return self.stop_after is not None and self.units >= self.stop_after

    def offer_best(self, v: np.ndarray, q: float) -> None:
        if self.st.best_score is None or q > self.st.best_score:
            self.st.best = v.copy()
            self.st.best_score = q

    def enter_stage(self, stage: Stage) -> None:
        st = self.st
        st.phase = stage.tag
        if st.current is None:
            rng = _generator(self.cfg.seed, _INIT_KEY)
            v = rng.random(stage.n)
            if not np.any(v > 0):
                v[:] = 1.0
            st.current = v
            st.current_score = ev.ratio(v)
        else:
            if stage.kind == "gradient":
                # the step constants assume sum-normalized heights
                st.current = ev.normalize_sum(st.current)
            if st.current.size != stage.n:
                before = ev.ratio(st.current)
                st.current = ev.upscale_repeat(st.current, self.cfg.upscale_factor)
                self.emit(event="upscale", n=stage.n, before=before, after=ev.ratio(st.current))
            st.current_score = ev.ratio(st.current)
        if stage.kind in ("coarse", "fine"):
            pcfg = self.cfg.coarse if stage.kind == "coarse" else self.cfg.fine
            st.current = NORMALIZATIONS[pcfg.normalization](st.current)
            st.current_score = ev.ratio(st.current)
        self.offer_best(st.current, st.current_score)

    def finish_stage(self, stage: Stage) -> None:
        st = self.st
        st.stage_scores.append({"phase": stage.tag, "n": stage.n, "score": st.current_score})
        log.info("%s done: score %.12f (run best %.12f)", stage.tag, st.current_score, st.best_score)
        self.emit(event="stage_done", phase=stage.tag, score=st.current_score, best=st.best_score)
        st.stage += 1
        st.repeat = st.k = st.s = st.i = 0
        st.scale = None

    def run_perturb(self, stage: Stage, pcfg: PerturbPhaseConfig) -> bool:
        st = self.st
        block = max(1, pcfg.iterations // 10)
        normalize = NORMALIZATIONS[pcfg.normalization]
        while st.repeat < pcfg.repeats:
            if st.scale is None:
                st.scale = pcfg.initial_scale
            while st.k < pcfg.iterations:
                rng = _generator(self.cfg.seed, st.stage, st.repeat, st.k)
                st.current, st.current_score = _perturb_iteration(
                    st.current, st.current_score, st.scale, pcfg.batch_size, rng, self.threads, normalize)
                self.offer_best(st.current, st.current_score)
                st.scale *= pcfg.decay
                st.k += 1
                if st.k % block == 0:
                    log.info("%s round %d iter %d: score %.12f scale %.6g",
                             stage.tag, st.repeat, st.k, st.current_score, st.scale)
                    self.emit(event="perturb", phase=stage.tag, repeat=st.repeat, k=st.k,
                              score=st.current_score, scale=st.scale)
                if self.tick():
                    return True
            st.repeat += 1
            st.k = 0
            st.scale = None
        return False

    def run_gradient(self, stage: Stage) -> bool:
        st = self.st
        gcfg = self.cfg.gradient
        block = max(1, gcfg.streams // 20)
        while st.s < gcfg.streams:
            st.current, st.current_score = gradient_stream(st.current, st.s, gcfg)
            self.offer_best(st.current, st.current_score)
            st.s += 1
            if st.s % block == 0:
                log.info("%s stream %d: score %.12f", stage.tag, st.s, st.current_score)
                self.emit(event="stream", phase=stage.tag, s=st.s, score=st.current_score)
            if self.tick():
                return True
        return False

    def run(self) -> RunCheckpoint:
        st = self.st
        while st.stage < len(self.stages):
            stage = self.stages[st.stage]
            fresh = st.repeat == 0 and st.k == 0 and st.s == 0 and st.scale is None
            if fresh:
                self.enter_stage(stage)
            if stage.kind == "gradient":
                stopped = self.run_gradient(stage)
            else:
                stopped = self.run_perturb(stage, self.cfg.coarse if stage.kind == "coarse" else self.cfg.fine)
            if stopped:
                return st
            self.finish_stage(stage)
        st.done = True
        st.phase = "done"
        self.save()
        return st


def new_run(cfg: PipelineConfig) -> RunCheckpoint:
    cfg.validate()
    return RunCheckpoint(config=cfg, rng=rng_descriptor(cfg.seed))


def run_pipeline(cfg: PipelineConfig, checkpoint_sink: Optional[Sink] = None, *,
                 resume_from: Optional[RunCheckpoint] = None, threads: int = 1,
                 events: Optional[Callable[[dict], None]] = None,
                 stop_after: Optional[int] = None) -> RunCheckpoint:
    """Run (or continue) the full search and return the final state.

    ``checkpoint_sink`` receives a snapshot every ``cfg.checkpoint_every``
    units of work (perturbation iterations or gradient streams) and once at
    the end. Sink ``OSError``s are logged and the run continues.
    ``stop_after`` halts after that many units without finishing; used to
    simulate interrupted runs.
    """
    if resume_from is not None:
        state = resume_from.snapshot()
        state.config.validate()
    else:
        state = new_run(cfg)
    return _Runner(state, checkpoint_sink, threads, events, stop_after).run()
