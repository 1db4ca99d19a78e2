import io
import math

import numpy as np
import pytest

from autoconv import evaluation as ev
from autoconv import iofmt
from autoconv import optimizer as op


class TestCoefficients:
    def test_simple(self):
        np.testing.assert_array_equal(iofmt.read_coefficients(io.StringIO("1\n2\n3\n")), [1, 2, 3])

    def test_comments_blanks_header(self):
        text = "# heights\nn=3\n\n1  # first\n# interleaved\n2\n3\n"
        np.testing.assert_array_equal(iofmt.read_coefficients(io.StringIO(text)), [1, 2, 3])

    def test_table_read_by_row(self):
        text = "0.1 0.2 0.54399\n0.4, 0.5, 0.6\n"
        v = iofmt.read_coefficients(io.StringIO(text))
        assert v[2] == 0.54399 and v.size == 6

    def test_header_mismatch(self):
        with pytest.raises(iofmt.CoefficientParseError):
            iofmt.read_coefficients(io.StringIO("n=4\n1\n2\n"))

    def test_negative_has_line_number(self):
        with pytest.raises(iofmt.CoefficientParseError) as exc:
            iofmt.read_coefficients(io.StringIO("1\n# c\n-0.5\n"))
        assert exc.value.line == 3 and "line 3" in str(exc.value)

    @pytest.mark.parametrize("text", ["", "# only a comment\n", "\n\n"])
    def test_empty(self, text):
        with pytest.raises(iofmt.CoefficientParseError):
            iofmt.read_coefficients(io.StringIO(text))

    @pytest.mark.parametrize("text", ["1\nabc\n", "1\n1..2\n", "nan\n", "inf\n"])
    def test_malformed(self, text):
        with pytest.raises(iofmt.CoefficientParseError):
            iofmt.read_coefficients(io.StringIO(text))

    def test_all_zero(self):
        with pytest.raises(ev.InvalidHeightsError):
            iofmt.read_coefficients(io.StringIO("0\n0.0\n"))

    def test_exact(self):
        from fractions import Fraction

        assert iofmt.read_coefficients_exact(io.StringIO("0.1\n1e-3\n")) == [Fraction(1, 10), Fraction(1, 1000)]

    def test_roundtrip(self, rng, tmp_path):
        p = tmp_path / "c.txt"
        for _ in range(100):
            v = rng.random(rng.integers(1, 60)) * 10 ** rng.uniform(-8, 8)
            iofmt.write_coefficients(v, p)
            first = p.read_text()
            w = iofmt.read_coefficients(p)
            np.testing.assert_array_equal(w, v)
            iofmt.write_coefficients(w, p)
            assert p.read_text() == first


class TestConfig:
    def test_roundtrip(self):
        for name in ("full", "desk", "smoke"):
            cfg = op.preset(name, seed=2**63 + 5)
            text = iofmt.dump_config(cfg)
            again = iofmt.load_config(io.StringIO(text))
            assert again == cfg
            assert iofmt.dump_config(again) == text

    def test_invalid_json(self):
        with pytest.raises(op.ConfigError):
            iofmt.load_config(io.StringIO("{nope"))

    def test_invalid_values(self):
        d = op.preset("smoke").to_dict()
        d["fine"]["decay"] = 2.0
        import json

        with pytest.raises(op.ConfigError):
            iofmt.load_config(io.StringIO(json.dumps(d)))


def synthetic_checkpoint(rng, n=10):
    cfg = op.preset("smoke", seed=int(rng.integers(0, 2**63)))
    cur = rng.random(n)
    best = rng.random(n)
    return op.RunCheckpoint(
        config=cfg, stage=1, phase="fine@10", repeat=1, k=17, s=0, i=0, scale=0.05 * 0.99998**17,
        current=cur, current_score=ev.ratio(cur), best=best, best_score=ev.ratio(best),
        rng=op.rng_descriptor(cfg.seed), stage_scores=[{"phase": "coarse@10", "n": n, "score": 0.7}],
        meta={"out": "x.txt"},
    )


class TestCheckpoint:
    def test_roundtrip(self, rng, tmp_path):
        p = tmp_path / "ck.json"
        cp = synthetic_checkpoint(rng)
        iofmt.write_checkpoint(cp, p)
        back = iofmt.read_checkpoint(p)
        np.testing.assert_array_equal(back.current, cp.current)
        np.testing.assert_array_equal(back.best, cp.best)
        assert (back.scale, back.k, back.repeat, back.phase, back.meta) == (cp.scale, cp.k, cp.repeat, cp.phase, cp.meta)
        assert back.config == cp.config
        assert iofmt.dump_checkpoint(back) == p.read_text()

    def test_truncated(self, rng, tmp_path):
        p = tmp_path / "ck.json"
        iofmt.write_checkpoint(synthetic_checkpoint(rng), p)
        text = p.read_text()
        p.write_text(text[: len(text) // 2])
        with pytest.raises(iofmt.CheckpointError):
            iofmt.read_checkpoint(p)

    def test_version_mismatch(self, rng):
        text = iofmt.dump_checkpoint(synthetic_checkpoint(rng)).replace('"version": 1', '"version": 99')
        with pytest.raises(iofmt.CheckpointError, match="version"):
            iofmt.parse_checkpoint(text)

    def test_score_mismatch(self, rng):
        cp = synthetic_checkpoint(rng)
        cp.best_score += 1e-6
        with pytest.raises(iofmt.CheckpointError, match="does not match"):
            iofmt.parse_checkpoint(iofmt.dump_checkpoint(cp))

    def test_atomic_write_leaves_no_temp(self, rng, tmp_path):
        p = tmp_path / "ck.json"
        for _ in range(3):
            iofmt.write_checkpoint(synthetic_checkpoint(rng), p)
        assert [f.name for f in tmp_path.iterdir()] == ["ck.json"]

    def test_real_run_checkpoints(self, tmp_path):
        p = tmp_path / "ck.json"
        st = op.run_pipeline(op.preset("smoke"), lambda cp: iofmt.write_checkpoint(cp, p))
        back = iofmt.read_checkpoint(p)
        assert back.done
        np.testing.assert_array_equal(back.best, st.best)


class TestPlotExport:
    def test_autoconv_raw_box(self):
        assert iofmt.export_plot([1.0], "autoconv") == [(0, 0), (1, 1), (2, 0)]

    def test_autoconv_normalized_box(self):
        assert iofmt.export_plot([1.0], "autoconv", normalized=True) == [(-0.5, 0), (0, 1), (0.5, 0)]

    def test_step_raw(self):
        pts = iofmt.export_plot([2.0, 3.0], "step")
        assert pts == [(0, 2), (1, 2), (1, 3), (2, 3)]

    def test_step_normalized(self, rng):
        v = rng.random(8)
        pts = iofmt.export_plot(v, "step", normalized=True)
        assert len(pts) == 16
        assert pts[0][0] == -0.25 and pts[-1][0] == 0.25
        xs = [p[0] for p in pts]
        assert xs == sorted(xs)

    def test_normalized_peak(self, rng):
        for n in (1, 5, 40):
            pts = iofmt.export_plot(rng.random(n), "autoconv", normalized=True)
            assert abs(max(p[1] for p in pts) - 1) < 1e-12
            xs = [p[0] for p in pts]
            assert all(a < b for a, b in zip(xs, xs[1:]))

    def test_reintegration(self, rng):
        v = rng.random(17)
        pts = np.array(iofmt.export_plot(v, "autoconv"))
        assert math.isclose(np.trapezoid(pts[:, 1], pts[:, 0]), ev.l1_norm(v), rel_tol=1e-10)

    def test_csv_roundtrip(self, rng, tmp_path):
        pts = iofmt.export_plot(rng.random(5), "autoconv", normalized=True)
        p = tmp_path / "plot.csv"
        iofmt.write_plot_csv(pts, p)
        assert p.read_text().splitlines()[0] == "x,value"
        assert iofmt.read_plot_csv(p) == pts

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            iofmt.export_plot([1.0], "histogram")
