import pytest
import torch

from vsrlab.errors import ConfigError
from vsrlab.evaluate import (
    compare_models,
    evaluate_clip,
    format_table,
    predict,
    read_report,
    write_report,
)
from vsrlab.gen import GeneratorSpec, build_generator
from vsrlab.loss import ConvFeatureExtractor
from vsrlab.seqcore import downsample, upsample

TINY_SPEC = GeneratorSpec("residual_based", 8, 1, (1,), "dot_product")


class IdentityOracle(torch.nn.Module):
    """Pretend generator that inverts the test's downsampling exactly."""

    def __init__(self, hr_frames):
        super().__init__()
        self.hr_frames = hr_frames

    def forward(self, x):
        return self.hr_frames


class TestEvaluateClip:
    def test_identity_oracle_maxes_metrics(self, seq64):
        model = IdentityOracle(seq64.frames)
        row = evaluate_clip(model, seq64, 2, "bicubic", "clip0")
        assert row.psnr == 100.0
        assert row.ssim == pytest.approx(1.0, abs=1e-6)
        assert row.lpips is None

    def test_untrained_model_beats_nothing_but_runs(self, seq64):
        model = build_generator(TINY_SPEC, seed=0)
        row = evaluate_clip(model, seq64, 2, "bicubic", "clip0")
        assert 0.0 < row.psnr < 100.0
        assert -1.0 < row.ssim <= 1.0

    def test_deterministic_rows(self, seq64):
        model = build_generator(TINY_SPEC, seed=1)
        a = evaluate_clip(model, seq64, 2, "bilinear", "c")
        b = evaluate_clip(model, seq64, 2, "bilinear", "c")
        assert a == b

    def test_scale_4_cascades(self, seq64):
        model = build_generator(TINY_SPEC, seed=2)
        row = evaluate_clip(model, seq64, 4, "bicubic", "c")
        assert row.scale == 4

    def test_predict_shapes(self, seq64):
        model = build_generator(TINY_SPEC, seed=3)
        lr = downsample(seq64, 4)
        out = predict(model, lr, 4)
        assert out.frames.shape == seq64.frames.shape

    def test_lpips_column_with_extractor(self, seq64):
        model = build_generator(TINY_SPEC, seed=4)
        extractor = ConvFeatureExtractor.seeded(0)
        row = evaluate_clip(model, seq64, 2, "bicubic", "c", extractor)
        assert row.lpips is not None and row.lpips >= 0.0

    def test_bad_scale(self, seq64):
        model = build_generator(TINY_SPEC, seed=5)
        with pytest.raises(ConfigError):
            evaluate_clip(model, seq64, 3, "bicubic")


class TestCompareModels:
    def test_cross_product_row_count(self, seq64):
        models = {
            "a": build_generator(TINY_SPEC, seed=6),
            "b": build_generator(TINY_SPEC, seed=7),
        }
        report = compare_models(models, [("c0", seq64)], scales=(2,), methods=("bicubic", "bilinear"))
        assert report.total_rows == 4  # 2 models x 1 clip x 2 methods x 1 scale
        assert len(report.rows["a"]) == 2

    def test_aggregate_of_identical_rows_equals_row(self, seq64):
        model = build_generator(TINY_SPEC, seed=8)
        report = compare_models({"m": model}, [("c0", seq64), ("c1", seq64)], scales=(2,), methods=("bicubic",))
        rows = report.rows["m"]
        agg = report.aggregates["m"]["bicubic"]["2"]
        assert agg["psnr"] == pytest.approx((rows[0].psnr + rows[1].psnr) / 2)
        assert agg["ssim"] == pytest.approx((rows[0].ssim + rows[1].ssim) / 2)

    def test_empty_clipset_rejected(self):
        with pytest.raises(ConfigError):
            compare_models({"m": build_generator(TINY_SPEC, seed=9)}, [])

    def test_no_models_rejected(self, seq64):
        with pytest.raises(ConfigError):
            compare_models({}, [("c", seq64)])


class TestReportIO:
    def test_round_trip_lossless(self, tmp_path, seq64):
        models = {
            "alpha": build_generator(TINY_SPEC, seed=10),
            "beta": build_generator(TINY_SPEC, seed=11),
        }
        report = compare_models(models, [("c0", seq64)], scales=(2,), methods=("bicubic", "bilinear"))
        write_report(report, tmp_path)
        back = read_report(tmp_path)
        assert back == report

    def test_na_lpips_round_trips(self, tmp_path, seq64):
        report = compare_models(
            {"m": build_generator(TINY_SPEC, seed=12)}, [("c", seq64)], scales=(2,), methods=("bicubic",)
        )
        assert report.rows["m"][0].lpips is None
        write_report(report, tmp_path)
        assert read_report(tmp_path) == report

    def test_format_table_mentions_models(self, seq64):
        report = compare_models(
            {"mymodel": build_generator(TINY_SPEC, seed=13)},
            [("c", seq64)],
            scales=(2,),
            methods=("bicubic",),
        )
        table = format_table(report)
        assert "mymodel" in table
        assert "bicubic" in table


class TestBaselineSanity:
    def test_plain_upsampling_has_finite_psnr(self, seq64):
        lr = downsample(seq64, 2, "bicubic")
        baseline = upsample(lr, 2, "bicubic")
        from vsrlab.loss import psnr

        value = psnr(seq64.frames, baseline.frames)
        assert 0.0 < value < 100.0
