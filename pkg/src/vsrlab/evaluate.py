"""Batch evaluation: PSNR/SSIM/LPIPS-style tables over clip sets.

Evaluation is full-frame (the patch grid is a training device): the clip is
downsampled with the configured method, run through the generator (twice,
cascaded, for scale 4), and compared against the ground truth. Reports are
grouped per model; aggregates are plain arithmetic means of the rows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import torch

from .errors import ConfigError, ShapeError
from .gen import Generator
from .loss import FeatureExtractor, perceptual_loss, psnr, ssim
from .seqcore import FrameSequence, downsample

CSV_COLUMNS = ("clip_id", "method", "scale", "psnr", "ssim", "lpips")


@dataclass(frozen=True)
class MetricRow:
    clip_id: str
    method: str
    scale: int
    psnr: float
    ssim: float
    lpips: float | None  # None renders as "n/a" (no pretrained extractor)


@dataclass(frozen=True)
class MetricsReport:
    """Rows grouped per model plus per (model, method, scale) mean aggregates."""

    rows: dict[str, tuple[MetricRow, ...]]
    aggregates: dict[str, dict[str, dict[str, dict[str, float | None]]]]

    @property
    def total_rows(self) -> int:
        return sum(len(r) for r in self.rows.values())


def predict(model: Generator, lr_clip: FrameSequence, scale: int) -> FrameSequence:
    """Full-frame generation; scale 4 runs the generator twice, cascaded."""
    if scale not in (2, 4):
        raise ConfigError(f"scale must be 2 or 4, got {scale}")
    frames = lr_clip.frames
    with torch.no_grad():
        passes = 1 if scale == 2 else 2
        for _ in range(passes):
            frames = model(frames)
    return lr_clip.with_frames(frames)


def evaluate_clip(
    model: Generator,
    hr_clip: FrameSequence,
    scale: int,
    method: str,
    clip_id: str = "clip",
    extractor: FeatureExtractor | None = None,
) -> MetricRow:
    """One table row: degrade by `scale`/`method`, reconstruct, measure."""
    if scale not in (2, 4):
        raise ConfigError(f"scale must be 2 or 4, got {scale}")
    lr_clip = downsample(hr_clip, scale, method)
    prediction = predict(model, lr_clip, scale)
    if prediction.frames.shape != hr_clip.frames.shape:
        raise ShapeError(
            f"prediction {tuple(prediction.frames.shape)} vs ground truth "
            f"{tuple(hr_clip.frames.shape)}"
        )
    lpips_value = None
    if extractor is not None:
        with torch.no_grad():
            lpips_value = float(
                perceptual_loss(hr_clip.frames, prediction.frames, extractor, "l2").item()
            )
    return MetricRow(
        clip_id=clip_id,
        method=method,
        scale=scale,
        psnr=psnr(hr_clip.frames, prediction.frames),
        ssim=float(ssim(hr_clip.frames, prediction.frames).item()),
        lpips=lpips_value,
    )


def _aggregate(rows: Sequence[MetricRow]) -> dict[str, dict[str, dict[str, float | None]]]:
    groups: dict[tuple[str, int], list[MetricRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.scale), []).append(row)
    out: dict[str, dict[str, dict[str, float | None]]] = {}
    for (method, scale), members in sorted(groups.items()):
        lpips_values = [r.lpips for r in members]
        out.setdefault(method, {})[str(scale)] = {
            "psnr": sum(r.psnr for r in members) / len(members),
            "ssim": sum(r.ssim for r in members) / len(members),
            "lpips": (
                sum(v for v in lpips_values) / len(lpips_values)
                if all(v is not None for v in lpips_values)
                else None
            ),
        }
    return out


def compare_models(
    models: Mapping[str, Generator],
    clipset: Sequence[tuple[str, FrameSequence]],
    scales: Sequence[int] = (2,),
    methods: Sequence[str] = ("bicubic", "bilinear"),
    extractor: FeatureExtractor | None = None,
) -> MetricsReport:
    """Full cross-product of models x clips x methods x scales."""
    if not models:
        raise ConfigError("need at least one model")
    if not clipset:
        raise ConfigError("clipset is empty")
    rows: dict[str, tuple[MetricRow, ...]] = {}
    aggregates: dict[str, dict] = {}
    for model_name, model in models.items():
        model_rows = []
        for clip_id, clip in clipset:
            for method in methods:
                for scale in scales:
                    model_rows.append(
                        evaluate_clip(model, clip, scale, method, clip_id, extractor)
                    )
        rows[model_name] = tuple(model_rows)
        aggregates[model_name] = _aggregate(model_rows)
    return MetricsReport(rows=rows, aggregates=aggregates)


def _format_cell(value: float | None) -> str:
    return "n/a" if value is None else repr(value)


def write_report(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    """Write one CSV per model plus a JSON aggregate block; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for model_name, rows in report.rows.items():
        path = out_dir / f"metrics_{model_name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(
                    [row.clip_id, row.method, row.scale, repr(row.psnr), repr(row.ssim), _format_cell(row.lpips)]
                )
        written.append(path)
    agg_path = out_dir / "aggregates.json"
    with open(agg_path, "w") as fh:
        json.dump(report.aggregates, fh, indent=2, sort_keys=True)
    written.append(agg_path)
    return written


def read_report(out_dir: str | Path) -> MetricsReport:
    """Inverse of write_report (lossless: floats round-trip through repr)."""
    out_dir = Path(out_dir)
    rows: dict[str, tuple[MetricRow, ...]] = {}
    for path in sorted(out_dir.glob("metrics_*.csv")):
        model_name = path.stem[len("metrics_") :]
        model_rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_COLUMNS:
                raise ConfigError(f"unexpected CSV header in {path}: {header}")
            for record in reader:
                clip_id, method, scale, psnr_s, ssim_s, lpips_s = record
                model_rows.append(
                    MetricRow(
                        clip_id=clip_id,
                        method=method,
                        scale=int(scale),
                        psnr=float(psnr_s),
                        ssim=float(ssim_s),
                        lpips=None if lpips_s == "n/a" else float(lpips_s),
                    )
                )
        rows[model_name] = tuple(model_rows)
    with open(out_dir / "aggregates.json") as fh:
        aggregates = json.load(fh)
    return MetricsReport(rows=rows, aggregates=aggregates)


def format_table(report: MetricsReport) -> str:
    """Human-readable aggregate table."""
    lines = [f"{'model':<20} {'method':<10} {'scale':<6} {'psnr':>10} {'ssim':>8} {'lpips':>8}"]
    for model_name, methods in sorted(report.aggregates.items()):
        for method, scales in sorted(methods.items()):
            for scale, metrics in sorted(scales.items()):
                lpips_txt = "n/a" if metrics["lpips"] is None else f"{metrics['lpips']:.4f}"
                lines.append(
                    f"{model_name:<20} {method:<10} {scale:<6} "
                    f"{metrics['psnr']:>10.3f} {metrics['ssim']:>8.4f} {lpips_txt:>8}"
                )
    return "\n".join(lines)
