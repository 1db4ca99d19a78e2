import dataclasses
import math

import numpy as np
import pytest

from autoconv import evaluation as ev
from autoconv import optimizer as op


def tiny_config(**kw):
    base = dict(
        n_ladder=[4, 8],
        upscale_factor=2,
        coarse=op.PerturbPhaseConfig(25.0, 0.999, 30, 8, 1),
        fine=op.PerturbPhaseConfig(0.05, 0.99998, 30, 8, 2),
        gradient=op.GradientPhaseConfig(streams=6, steps_per_stream=20),
        seed=7,
        checkpoint_every=7,
    )
    base.update(kw)
    return op.PipelineConfig(**base)


class TestPerturbCandidate:
    def test_zero_scale_identity(self):
        np.testing.assert_array_equal(op.perturb_candidate([1, 1], 0.0, [0.3, -0.2]), [1, 1])

    def test_absolute_value(self):
        np.testing.assert_allclose(op.perturb_candidate([0.1], 25.0, [-0.4]), [9.9], rtol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            op.perturb_candidate([1, 2], 1.0, [0.1])

    def test_distribution(self):
        # entries are |S U(-1/2, 1/2)| ~ U(0, S/2), mean S/4
        rng = op._generator(1, 2, 3)
        S = 3.0
        c = op.perturb_candidate(np.zeros(10), S, rng.random((10_000, 10)) - 0.5)
        assert abs(c.mean() / (S / 4) - 1) < 0.01
        assert c.min() >= 0 and c.max() <= S / 2


class TestPerturbPhase:
    def test_identity_config(self, rng):
        start = rng.random(9)
        cfg = op.PerturbPhaseConfig(0.0, 1.0, 1, 1, 1, normalization="sum")
        v, q = op.perturb_phase(start, cfg, seed=3)
        np.testing.assert_allclose(v, ev.normalize_sum(start), rtol=1e-15)
        assert q == ev.ratio(ev.normalize_sum(start))

    @pytest.mark.parametrize("norm", ["max", "sum"])
    def test_self_consistent_and_deterministic(self, rng, norm):
        start = rng.random(12)
        cfg = op.PerturbPhaseConfig(0.5, 0.99, 40, 16, 2, normalization=norm)
        v, q = op.perturb_phase(start, cfg, seed=11)
        v2, q2 = op.perturb_phase(start, cfg, seed=11)
        np.testing.assert_array_equal(v, v2)
        assert q == q2
        assert abs(ev.score(v).ratio - q) <= 1e-14
        assert q >= ev.ratio(start)
        if norm == "max":
            assert v.max() == 1.0
        else:
            assert math.isclose(v.sum(), 1.0, rel_tol=1e-14)

    def test_thread_count_irrelevant(self, rng):
        start = rng.random(15)
        cfg = op.PerturbPhaseConfig(1.0, 0.99, 25, 32, 1)
        a = op.perturb_phase(start, cfg, seed=5, threads=1)
        b = op.perturb_phase(start, cfg, seed=5, threads=4)
        np.testing.assert_array_equal(a[0], b[0])

    def test_normalization_does_not_change_ranking(self, rng):
        X = rng.random((64, 20)) * rng.random((64, 1)) * 50
        raw = ev.score_batch(X)
        for f in op.NORMALIZATIONS.values():
            normed = ev.score_batch(np.array([f(x) for x in X]))
            np.testing.assert_array_equal(np.argsort(raw, kind="stable"), np.argsort(normed, kind="stable"))

    def test_invalid_config(self):
        with pytest.raises(op.ConfigError):
            op.perturb_phase([1.0], op.PerturbPhaseConfig(1.0, 1.5, 1), seed=0)
        with pytest.raises(op.ConfigError):
            op.PerturbPhaseConfig(1.0, 0.9, 0).validate()
        with pytest.raises(op.ConfigError):
            op.PerturbPhaseConfig(1.0, 0.9, 1, normalization="l2").validate()


class TestGradientStream:
    def test_zero_gradient_fixed_point(self):
        cfg = op.GradientPhaseConfig(streams=1, steps_per_stream=10)
        v, q = op.gradient_stream([2.0], 0, cfg)
        np.testing.assert_array_equal(v, [2.0])
        assert math.isclose(q, 2 / 3, rel_tol=1e-15)

    def test_step_length_formula(self):
        cfg = op.GradientPhaseConfig()
        assert math.isclose(cfg.step_length(0, 0, 0.9), 0.001, rel_tol=1e-12)
        assert math.isclose(cfg.step_length(15, 7, 0.5), 0.01 / (2 * 2) * 0.5, rel_tol=1e-12)

    def test_first_step_euclidean_length(self, rng):
        v = rng.random(30) + 1.0  # far from the boundary so no clamping
        cfg = op.GradientPhaseConfig(steps_per_stream=1)
        q = ev.ratio(v)
        w = op.gradient_step(v, 0, 0, cfg)
        assert math.isclose(np.linalg.norm(w - v), 0.01 * (1 - q), rel_tol=1e-10)

    def test_nonnegative_and_rounding(self, rng):
        v = rng.random(20) ** 6  # many entries near zero get clamped
        cfg = op.GradientPhaseConfig(steps_per_stream=50, base_step=0.5, rounding_digits=4)
        w, q = op.gradient_stream(v, 0, cfg)
        assert np.all(w >= 0)
        np.testing.assert_array_equal(w, np.round(w, 4))
        assert q == ev.ratio(w)

    def test_negative_stream_index(self):
        with pytest.raises(ValueError):
            op.gradient_stream([1.0, 2.0], -1, op.GradientPhaseConfig())

    @pytest.mark.parametrize("digits", [None, 6])
    def test_kernel_matches_stepwise_reference(self, rng, backend, digits):
        v = rng.random(23) ** 3
        cfg = op.GradientPhaseConfig(steps_per_stream=40, base_step=0.05, rounding_digits=digits)
        w, q = op.gradient_stream(v, 3, cfg)
        ref = v.copy()
        for i in range(cfg.steps_per_stream):
            ref = op.gradient_step(ref, i, 3, cfg)
        np.testing.assert_allclose(w, ref, rtol=1e-12, atol=1e-14)
        assert math.isclose(q, ev.ratio(ref), rel_tol=1e-12)

    def test_backends_agree(self, rng):
        from autoconv._backend import compiled, fallback, kernels

        if not compiled:
            pytest.skip("compiled kernels not built")
        v = rng.random(115)
        args = (5, 200, 0.01, 0.25, 1 / 3, -1, op.GRAD_EPS)
        np.testing.assert_allclose(kernels.gradient_stream(v, *args), fallback.gradient_stream(v, *args),
                                   rtol=1e-10, atol=1e-13)

    def test_improves_typical_start(self):
        # a fresh random start gains from a single default-length stream
        cfg = op.GradientPhaseConfig()
        wins = 0
        for t in range(20):
            v = np.random.default_rng(t).random(50)
            wins += op.gradient_stream(v, 0, cfg)[1] > ev.ratio(v)
        assert wins >= 18

    def test_rounding_digits_validated(self):
        with pytest.raises(op.ConfigError):
            op.GradientPhaseConfig(rounding_digits=-1).validate()


class TestPlanAndConfig:
    def test_plan_full_ladder(self):
        tags = [s.tag for s in op.plan(op.PipelineConfig())]
        assert tags == ["coarse@23", "fine@23", "gradient@115", "coarse@115", "fine@115", "gradient@575"]

    def test_plan_single(self):
        assert [s.tag for s in op.plan(tiny_config(n_ladder=[5]))] == ["coarse@5", "fine@5", "gradient@5"]

    def test_ladder_validation(self):
        with pytest.raises(op.ConfigError):
            tiny_config(n_ladder=[4, 9]).validate()
        with pytest.raises(op.ConfigError):
            tiny_config(n_ladder=[]).validate()

    def test_dict_roundtrip(self):
        cfg = tiny_config()
        assert op.PipelineConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        d = tiny_config().to_dict()
        d["bogus"] = 1
        with pytest.raises(op.ConfigError):
            op.PipelineConfig.from_dict(d)

    @pytest.mark.parametrize("name", ["full", "desk", "smoke"])
    def test_presets_valid(self, name):
        cfg = op.preset(name, seed=3)
        assert cfg.seed == 3
        cfg.validate()

    def test_full_preset_constants(self):
        cfg = op.preset("full")
        assert cfg.n_ladder == [23, 115, 575] and cfg.upscale_factor == 5
        assert (cfg.coarse.initial_scale, cfg.coarse.decay, cfg.coarse.iterations) == (25.0, 0.999, 1000)
        assert (cfg.fine.initial_scale, cfg.fine.decay, cfg.fine.iterations, cfg.fine.repeats) == (
            0.05, 0.99998, 1000, 400)
        g = cfg.gradient
        assert (g.streams, g.steps_per_stream, g.base_step, g.iter_exponent) == (10**6, 1000, 0.01, 0.25)
        assert math.isclose(g.stream_exponent, 1 / 3)


class TestPipeline:
    def test_ladder_one(self):
        cfg = tiny_config(n_ladder=[1])
        st = op.run_pipeline(cfg)
        assert st.done and st.best.size == 1
        assert math.isclose(st.best_score, 2 / 3, rel_tol=1e-15)

    def test_run_and_invariants(self):
        cps = []
        st = op.run_pipeline(tiny_config(), cps.append)
        assert st.done and st.best.size == 8
        assert math.isclose(ev.score(st.best).ratio, st.best_score, rel_tol=1e-15)
        assert cps and cps[-1].done
        # the run-level best never decreases between checkpoints
        bests = [c.best_score for c in cps]
        assert bests == sorted(bests)
        # every recorded vector is feasible
        assert all(np.all(c.current >= 0) and np.all(c.best >= 0) for c in cps)
        # the best is at least every stage result
        assert st.best_score >= max(s["score"] for s in st.stage_scores)

    def test_perturb_incumbent_monotone_within_stage(self):
        cps = []
        op.run_pipeline(tiny_config(checkpoint_every=1), cps.append)
        by_stage = {}
        for c in cps:
            if not c.done and c.phase.startswith(("coarse", "fine")):
                by_stage.setdefault(c.stage, []).append(c.current_score)
        assert by_stage
        for scores in by_stage.values():
            assert scores == sorted(scores)

    def test_upscale_handoff(self):
        events = []
        op.run_pipeline(tiny_config(), events=events.append)
        ups = [e for e in events if e["event"] == "upscale"]
        assert len(ups) == 1
        assert math.isclose(ups[0]["before"], ups[0]["after"], rel_tol=1e-10)

    def test_deterministic_across_threads(self):
        a = op.run_pipeline(tiny_config(), threads=1)
        b = op.run_pipeline(tiny_config(), threads=4)
        np.testing.assert_array_equal(a.best, b.best)
        assert a.best_score == b.best_score

    def test_seed_matters(self):
        a = op.run_pipeline(tiny_config(seed=1))
        b = op.run_pipeline(tiny_config(seed=2))
        assert not np.array_equal(a.best, b.best)

    @pytest.mark.parametrize("stop", [1, 7, 29, 60, 75])
    def test_resume_bit_identical(self, stop):
        full = op.run_pipeline(tiny_config())
        cps = []
        partial = op.run_pipeline(tiny_config(), cps.append, stop_after=stop)
        assert not partial.done
        # resume from the last checkpoint written before the interruption
        resumed = op.run_pipeline(None, resume_from=cps[-1]) if cps else op.run_pipeline(tiny_config())
        np.testing.assert_array_equal(resumed.best, full.best)
        np.testing.assert_array_equal(resumed.current, full.current)
        assert resumed.stage_scores == full.stage_scores

    def test_sink_errors_do_not_stop_the_run(self, caplog):
        def broken(cp):
            raise OSError("disk full")

        st = op.run_pipeline(tiny_config(), broken)
        assert st.done
        assert "checkpoint write failed" in caplog.text

    def test_invalid_ladder(self):
        with pytest.raises(op.ConfigError):
            op.run_pipeline(tiny_config(n_ladder=[3, 5]))

    @pytest.mark.slow
    def test_full_ladder_beats_coarse_only(self):
        # perturbation counts at 1/100 of the full budget; gradient streams cut further
        wins = 0
        for seed in range(10):
            cfg = op.PipelineConfig(
                coarse=op.PerturbPhaseConfig(25.0, 0.999, 10, 64, 1),
                fine=op.PerturbPhaseConfig(0.05, 0.99998, 10, 64, 4, normalization="max"),
                gradient=op.GradientPhaseConfig(streams=50, steps_per_stream=100),
                seed=seed,
            )
            st = op.run_pipeline(cfg)
            assert [s["n"] for s in st.stage_scores][-1] == 575
            wins += st.best_score > st.stage_scores[0]["score"]
        assert wins >= 8
