"""Command-line front end: degrade, train, upscale, evaluate.

Usage: vsrlab <command> --config <file> [--seed N] [--out DIR]
Exit codes: 0 success, 1 runtime failure, 2 config/usage error. Every
command writes manifest.json into the output directory. The VSRLAB_OUT
environment variable overrides the configured output root; an explicit
--out flag overrides both.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import torch

from . import __version__
from .config import RunConfig, load_config, serialize_config
from .degrade import apply_plan
from .errors import ConfigError, VsrlabError
from .evaluate import compare_models, format_table, predict, write_report
from .gen import Generator, load_generator, save_generator
from .loss import ConvFeatureExtractor
from .seqcore import derive_seed, load_clip, save_clip
from .trainer import (
    TrainState,
    load_train_state,
    save_train_state,
    train_epoch,
)


def _discover_clips(cfg: RunConfig) -> list[tuple[str, Path]]:
    root = Path(cfg.dataset.root)
    if not cfg.dataset.root or not root.is_dir():
        raise ConfigError(f"dataset root not found: {cfg.dataset.root!r}")
    if cfg.dataset.clips:
        listing = Path(cfg.dataset.clips)
        if not listing.is_absolute():
            listing = root / listing
        if not listing.is_file():
            raise ConfigError(f"clips listing not found: {listing}")
        names = [line.strip() for line in listing.read_text().splitlines() if line.strip()]
    else:
        names = sorted(p.name for p in root.iterdir() if p.is_dir())
    clips = []
    for name in names:
        clip_dir = root / name
        if not clip_dir.is_dir():
            raise ConfigError(f"clip directory not found: {clip_dir}")
        clips.append((name, clip_dir))
    if not clips:
        raise ConfigError(f"no clip directories under {root}")
    return clips


def _resolve_out(cfg: RunConfig, args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("VSRLAB_OUT")
    if env:
        return Path(env)
    return Path(cfg.out)


def _write_manifest(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def _load_cfg(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
    out_dir = _resolve_out(cfg, args)
    return cfg, out_dir


def cmd_degrade(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_cfg(args)
    clips = _discover_clips(cfg)
    draws: dict[str, list[dict]] = {}
    for clip_id, clip_dir in clips:
        seq = load_clip(clip_dir)
        log: list = []
        degraded = apply_plan(
            seq, cfg.degradation, seed=derive_seed(cfg.seed, clip_id, "degrade"), log=log
        )
        save_clip(degraded, out_dir / clip_id)
        draws[clip_id] = [s.to_json() for s in log]
        print(f"degraded {clip_id}: {seq.n_frames} frames -> {out_dir / clip_id}")
    _write_manifest(
        out_dir,
        {
            "command": "degrade",
            "version": __version__,
            "seed": cfg.seed,
            "config": serialize_config(cfg),
            "degradation_draws": draws,
        },
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_cfg(args)
    clips = _discover_clips(cfg)
    extractor = None
    if cfg.loss.weights.get("perceptual", 0) > 0:
        if cfg.evaluate.extractor:
            extractor = ConvFeatureExtractor.load(cfg.evaluate.extractor)
        else:
            extractor = ConvFeatureExtractor.seeded(derive_seed(cfg.seed, "extractor"))
    if cfg.train.resume:
        state = load_train_state(cfg.train.resume, extractor=extractor)
        print(f"resumed from {cfg.train.resume} (epochs done: {state.counters['epochs_done']})")
    else:
        state = TrainState.create(cfg.generator, cfg.discriminator, cfg.train, cfg.loss, extractor)
    degradation_draws: dict[str, list] = {}
    epochs = []
    first_epoch = state.counters["epochs_done"]
    for epoch in range(first_epoch, first_epoch + cfg.train.epochs):
        log: dict[str, list] = {}
        summary = train_epoch(clips, state, cfg.train, plan=cfg.degradation, epoch=epoch, degradation_log=log)
        for clip_id, entries in log.items():
            degradation_draws.setdefault(clip_id, []).extend(s.to_json() for s in entries)
        epochs.append(summary.to_json())
        if summary.mean_bundle is None:
            print(f"epoch {epoch}: no usable crops")
        else:
            terms = " ".join(f"{k}={v:.5f}" for k, v in sorted(summary.mean_bundle.terms.items()))
            print(f"epoch {epoch}: total={summary.mean_bundle.total:.5f} {terms}")
        if (epoch - first_epoch + 1) % cfg.train.checkpoint_every == 0:
            save_train_state(state, out_dir / f"train_state_{epoch + 1:04d}.ckpt")
            save_generator(
                state.generator,
                out_dir / f"generator_{epoch + 1:04d}.ckpt",
                extra={"epoch": epoch + 1},
                dtype="float16" if cfg.train.mixed_precision else "float32",
            )
    if state.counters["crops_used"] == 0:
        print("warning: no usable crops in the whole run", file=sys.stderr)
    _write_manifest(
        out_dir,
        {
            "command": "train",
            "version": __version__,
            "seed": cfg.seed,
            "config": serialize_config(cfg),
            "degradation_draws": degradation_draws,
            "epochs": epochs,
            "counters": state.counters,
        },
    )
    return 0


def cmd_upscale(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_cfg(args)
    checkpoint = args.checkpoint or cfg.upscale.checkpoint
    input_dir = args.input or cfg.upscale.input
    scale = args.scale or cfg.upscale.scale
    if not checkpoint:
        raise ConfigError("no generator checkpoint given (flag --checkpoint or [upscale] checkpoint)")
    if not input_dir:
        raise ConfigError("no input clip given (flag --input or [upscale] input)")
    if scale not in (2, 4):
        raise ConfigError(f"scale must be 2 or 4, got {scale}")
    model = load_generator(checkpoint)
    seq = load_clip(input_dir)
    result = predict(model, seq, scale)
    clip_name = Path(input_dir).name
    save_clip(result, out_dir / f"{clip_name}_x{scale}")
    print(
        f"upscaled {clip_name}: {seq.n_frames} frames "
        f"{seq.height}x{seq.width} -> {result.height}x{result.width}"
    )
    _write_manifest(
        out_dir,
        {
            "command": "upscale",
            "version": __version__,
            "seed": cfg.seed,
            "config": serialize_config(cfg),
            "checkpoint": str(checkpoint),
            "input": str(input_dir),
            "scale": scale,
        },
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg, out_dir = _load_cfg(args)
    clips = _discover_clips(cfg)
    if not cfg.evaluate.models:
        raise ConfigError("no models to evaluate ([evaluate] model.<name> = <checkpoint>)")
    models: dict[str, Generator] = {
        name: load_generator(path) for name, path in cfg.evaluate.models.items()
    }
    extractor = ConvFeatureExtractor.load(cfg.evaluate.extractor) if cfg.evaluate.extractor else None
    clipset = [(clip_id, load_clip(clip_dir)) for clip_id, clip_dir in clips]
    report = compare_models(
        models, clipset, scales=cfg.evaluate.scales, methods=cfg.evaluate.methods, extractor=extractor
    )
    paths = write_report(report, out_dir)
    print(format_table(report))
    _write_manifest(
        out_dir,
        {
            "command": "evaluate",
            "version": __version__,
            "seed": cfg.seed,
            "config": serialize_config(cfg),
            "report_files": [str(p) for p in paths],
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsrlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vsrlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("degrade", cmd_degrade),
        ("train", cmd_train),
        ("upscale", cmd_upscale),
        ("evaluate", cmd_evaluate),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "upscale":
            p.add_argument("--checkpoint", default=None, help="generator checkpoint path")
            p.add_argument("--input", default=None, help="input clip directory")
            p.add_argument("--scale", type=int, default=None, choices=(2, 4))
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VsrlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
