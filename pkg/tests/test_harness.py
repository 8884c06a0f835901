import io

import numpy as np
import pytest

from sketchpca.errors import UsageError
from sketchpca.harness import (
    ExperimentConfig,
    aggregates_table,
    compare_methods,
    records_table,
    run,
    write_csv,
)
from sketchpca.model import SpikedModelSpec
from sketchpca.sketch import SketchSpec
from sketchpca.theory import AspectRatios, predict_orthogonal_family


def _small_model(**kw):
    defaults = dict(n=600, p=120, k=1, d=(5.0,), noise="uniform")
    defaults.update(kw)
    return SpikedModelSpec(**defaults)


def _csv_bytes(records):
    cols, rows = records_table(records, include_timing=False)
    buf = io.StringIO()
    write_csv(buf, cols, rows)
    return buf.getvalue()


class TestRun:
    def test_deterministic_csv(self):
        cfg = ExperimentConfig(model=_small_model(), sketch=SketchSpec("haar", 60),
                               reps=2, base_seed=5)
        a = _csv_bytes(run(cfg).records)
        b = _csv_bytes(run(cfg).records)
        assert a == b

    def test_tracks_theory_at_moderate_size(self):
        model = _small_model(n=1500, p=300, d=(5.0,))
        cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", 150),
                               reps=8, base_seed=2)
        agg = run(cfg).aggregates[0]
        pred = predict_orthogonal_family(5.0, AspectRatios(0.2, 0.1))
        assert abs(agg["lambda_emp_mean"][0] / pred.theta - 1) <= 0.08
        assert abs(agg["cos2_emp_mean"][0] - pred.cos2) <= 0.08

    def test_below_threshold_sticks_to_edge(self):
        model = _small_model(n=2000, p=400, d=(1.0,))
        cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", 200),
                               reps=6, base_seed=3)
        agg = run(cfg).aggregates[0]
        lam_plus = AspectRatios(0.2, 0.1).edges()[1]
        assert abs(agg["lambda_emp_mean"][0] / lam_plus - 1) <= 0.1
        assert agg["cos2_emp_mean"][0] <= 0.05

    def test_zscore_shrinks_with_n(self):
        # |mean - theta| / SE decreases from n=1000 to n=4000
        zs = {}
        for n in (1000, 4000):
            model = _small_model(n=n, p=n // 5, d=(5.0,))
            cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", n // 10),
                                   reps=10, base_seed=17)
            agg = run(cfg).aggregates[0]
            pred = predict_orthogonal_family(5.0, AspectRatios(0.2, 0.1))
            se = agg["lambda_emp_sd"][0] / np.sqrt(10)
            zs[n] = abs(agg["lambda_emp_mean"][0] - pred.theta) / se
        assert zs[4000] < zs[1000]

    def test_leverage_and_osnap_have_no_predictions(self):
        cfg = ExperimentConfig(model=_small_model(), sketch=SketchSpec("osnap", 60, osnap_s=2),
                               reps=2, base_seed=1)
        res = run(cfg)
        assert all(rec.predicted is None for rec in res.records)
        assert np.isnan(res.aggregates[0]["lambda_pred"][0])

    def test_uniform_sample_uses_realized_ratio_per_rep(self):
        cfg = ExperimentConfig(model=_small_model(), sketch=SketchSpec("uniform_sample", 60),
                               reps=3, base_seed=11)
        res = run(cfg)
        for rec in res.records:
            assert rec.xi_used == pytest.approx(rec.r_effective / rec.n)
        # aggregate holds the nominal-ratio prediction
        agg = res.aggregates[0]
        nominal = predict_orthogonal_family(5.0, AspectRatios(0.2, 0.1))
        assert agg["lambda_pred"][0] == pytest.approx(nominal.theta)

    def test_noise_only_path(self):
        cfg = ExperimentConfig(model=_small_model(n=1200, p=240), sketch=SketchSpec("haar", 120),
                               reps=4, base_seed=7, noise_only=True)
        res = run(cfg)
        lam_plus = AspectRatios(0.2, 0.1).edges()[1]
        agg = res.aggregates[0]
        assert agg["d"] == ()
        assert abs(agg["lambda_emp_mean"][0] / lam_plus - 1) <= 0.12

    def test_d_grid_needs_k1(self):
        model = SpikedModelSpec(n=100, p=30, k=2, d=(3.0, 2.0))
        with pytest.raises(UsageError):
            ExperimentConfig(model=model, sketch=SketchSpec("haar", 20), d_grid=(2.0,))


class TestCompare:
    def test_single_method_degenerates_to_run(self):
        cfg = ExperimentConfig(model=_small_model(), sketch=[SketchSpec("haar", 60)],
                               reps=2, base_seed=5)
        cfg1 = ExperimentConfig(model=_small_model(), sketch=SketchSpec("haar", 60),
                                reps=2, base_seed=5)
        assert _csv_bytes(compare_methods(cfg).records) == _csv_bytes(run(cfg1).records)

    def test_paired_reproducibility(self):
        cfg = ExperimentConfig(
            model=_small_model(),
            sketch=[SketchSpec("haar", 60), SketchSpec("iid", 60)],
            reps=3, base_seed=9,
        )
        a = compare_methods(cfg)
        b = compare_methods(cfg)
        for agg_a, agg_b in zip(a.aggregates, b.aggregates):
            np.testing.assert_array_equal(agg_a["lambda_emp_mean"], agg_b["lambda_emp_mean"])

    def test_haar_beats_iid_on_overlap(self):
        model = _small_model(n=2000, p=400, d=(5.0,))
        cfg = ExperimentConfig(
            model=model,
            sketch=[SketchSpec("haar", 1000), SketchSpec("iid", 1000)],
            reps=8, base_seed=13,
        )
        res = compare_methods(cfg)
        stats = {a["method"]: a["cos2_emp_mean"][0] for a in res.aggregates}
        assert stats["haar"] > stats["iid"]

    def test_countsketch_normalized_not_worse_than_plain(self):
        # paired runs; the normalized variant wins or ties within one SE
        model = SpikedModelSpec(n=100, p=500, k=1, d=(5.0,), noise="uniform")
        cfg = ExperimentConfig(
            model=model,
            sketch=[SketchSpec("countsketch", 20), SketchSpec("countsketch_normalized", 20)],
            reps=20, base_seed=23,
        )
        res = compare_methods(cfg)
        stats = {a["method"]: (a["cos2_emp_mean"][0], a["cos2_emp_sd"][0]) for a in res.aggregates}
        mean_n, sd_n = stats["countsketch_normalized"]
        mean_p, _ = stats["countsketch"]
        assert mean_n >= mean_p - sd_n / np.sqrt(20)


class TestMultiSpike:
    def test_offdiagonal_overlaps_small(self):
        model = SpikedModelSpec(n=4000, p=800, k=3, d=(10.0, 6.0, 4.0), noise="uniform")
        cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", 400), reps=4, base_seed=29)
        res = run(cfg)
        assert res.aggregates[0]["cos2_offdiag_mean"] <= 0.05

    def test_per_spike_predictions(self):
        model = SpikedModelSpec(n=1000, p=200, k=2, d=(8.0, 5.0))
        cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", 100), reps=3, base_seed=31)
        agg = run(cfg).aggregates[0]
        ar = AspectRatios(0.2, 0.1)
        for i, d in enumerate((8.0, 5.0)):
            assert agg["lambda_pred"][i] == pytest.approx(predict_orthogonal_family(d, ar).theta)


class TestCsv:
    def test_empty_aggregate_list_is_header_only(self):
        cols, rows = aggregates_table([])
        buf = io.StringIO()
        write_csv(buf, cols, rows)
        assert buf.getvalue().strip().count("\n") == 0

    def test_roundtrip_is_bitwise(self):
        cfg = ExperimentConfig(model=_small_model(n=200, p=40), sketch=SketchSpec("haar", 20),
                               reps=2, base_seed=5)
        res = run(cfg)
        cols, rows = records_table(res.records, include_timing=False)
        buf = io.StringIO()
        write_csv(buf, cols, rows)
        lines = buf.getvalue().strip().split("\n")
        header = lines[0].split(",")
        for line, row in zip(lines[1:], rows):
            parsed = dict(zip(header, line.split(",")))
            assert float(parsed["lambda_emp_1"]) == row[header.index("lambda_emp_1")]
            assert float(parsed["cos2_emp_11"]) == row[header.index("cos2_emp_11")]

    def test_k2_record_schema_width(self):
        model = SpikedModelSpec(n=100, p=30, k=2, d=(4.0, 2.0))
        cfg = ExperimentConfig(model=model, sketch=SketchSpec("haar", 20), reps=1, base_seed=1)
        res = run(cfg)
        cols, rows = records_table(res.records)
        buf = io.StringIO()
        write_csv(buf, cols, rows)
        lines = buf.getvalue().strip().split("\n")
        assert len(lines) == 1 + 1  # header + one record row
        # 6 leading + 5 per spike x2 + offdiag + seed + r_effective + wall_ms
        assert len(cols) == 6 + 10 + 4
        assert len(rows[0]) == len(cols)

    def test_comment_lines(self):
        buf = io.StringIO()
        write_csv(buf, ["a"], [[1.0]], comments=["hello"])
        assert buf.getvalue().startswith("# hello\n")
