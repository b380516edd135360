"""Sectioned key=value run configuration: strict parse and canonical serialize.

Every field has a default; unknown sections or keys are rejected so typos
cannot silently fall back. serialize_config writes every key explicitly,
which makes parse -> serialize -> parse a fixed point.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .degrade import DegradationPlan, OperatorConfig, _PARAM_SCHEMAS, _SCALAR_ONLY
from .disc import DiscriminatorSpec
from .errors import ConfigError
from .gen import GeneratorSpec
from .loss import TERM_NAMES, LossConfig
from .trainer import TrainConfig


@dataclass
class DatasetConfig:
    root: str = ""
    clips: str = ""  # optional clips.txt subset listing


@dataclass
class EvalOptions:
    scales: tuple[int, ...] = (2,)
    methods: tuple[str, ...] = ("bicubic", "bilinear")
    models: dict[str, str] = field(default_factory=dict)  # name -> checkpoint
    extractor: str = ""  # checkpoint path; empty -> lpips column is n/a


@dataclass
class UpscaleOptions:
    checkpoint: str = ""
    input: str = ""
    scale: int = 2


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/out"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    degradation: DegradationPlan = field(default_factory=DegradationPlan)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvalOptions = field(default_factory=EvalOptions)
    upscale: UpscaleOptions = field(default_factory=UpscaleOptions)


_SECTIONS = (
    "run",
    "dataset",
    "generator",
    "discriminator",
    "degradation",
    "loss",
    "train",
    "evaluate",
    "upscale",
)

_TRAIN_KEYS = {
    "learning_rate": float,
    "clip_norm": float,
    "patch_size": int,
    "leaf_scale_steps": int,
    "crop_size": int,
    "seq_len": int,
    "epochs": int,
    "optimizer": str,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_epsilon": float,
    "dark_threshold": float,
    "patch_order": str,
    "patch_stride": int,
    "checkpoint_every": int,
    "mixed_precision": bool,
    "resume": str,
}

_LOSS_EXTRA_KEYS = {
    "charbonnier_epsilon": float,
    "pyramid_levels": int,
    "perceptual_norm": str,
    "laplacian_kernel": str,
}

_INT_STEP_PARAMS = {"kernel_size", "iterations", "quality", "blur_factor"}


def _parse_bool(raw: str, context: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"{context}: expected a boolean, got {raw!r}")


def _parse_typed(raw: str, kind: type, context: str):
    try:
        if kind is bool:
            return _parse_bool(raw, context)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{context}: cannot parse {raw!r} as {kind.__name__}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_step_param(kind: str, key: str, raw: str) -> object:
    if key not in _PARAM_SCHEMAS[kind]:
        raise ConfigError(f"unknown degradation param {key!r} for {kind}")
    base = _PARAM_SCHEMAS[kind][key]
    context = f"[degradation] step param {key}"
    if ":" in raw and key not in _SCALAR_ONLY:
        lo, hi = raw.split(":", 1)
        cast = int if key in _INT_STEP_PARAMS else float
        return (_parse_typed(lo, cast, context), _parse_typed(hi, cast, context))
    if base is bool:
        return _parse_bool(raw, context)
    cast = int if key in _INT_STEP_PARAMS else float
    return _parse_typed(raw, cast, context)


def _fmt_step_param(value) -> str:
    if isinstance(value, tuple):
        return f"{_fmt(value[0])}:{_fmt(value[1])}"
    return _fmt(value)


def _parse_degradation(items: dict[str, str]) -> DegradationPlan:
    seed = 0
    steps: dict[int, dict[str, str]] = {}
    for key, raw in items.items():
        if key == "seed":
            seed = _parse_typed(raw, int, "[degradation] seed")
            continue
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "step" or not parts[1].isdigit():
            raise ConfigError(f"unknown key {key!r} in [degradation]")
        steps.setdefault(int(parts[1]), {})[parts[2]] = raw
    configs = []
    for index in sorted(steps):
        fields = steps[index]
        if "kind" not in fields:
            raise ConfigError(f"[degradation] step {index} is missing 'kind'")
        kind = fields.pop("kind")
        probability = 1.0
        if "probability" in fields:
            probability = _parse_typed(
                fields.pop("probability"), float, f"[degradation] step {index} probability"
            )
        if kind not in _PARAM_SCHEMAS:
            raise ConfigError(f"unknown degradation kind {kind!r}")
        params = {key: _parse_step_param(kind, key, raw) for key, raw in fields.items()}
        configs.append(OperatorConfig(kind=kind, probability=probability, params=params))
    return DegradationPlan(steps=tuple(configs), seed=seed)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")

    def items(section: str) -> dict[str, str]:
        return dict(parser.items(section)) if parser.has_section(section) else {}

    def take(section: str, data: dict[str, str], key: str, kind: type, default):
        if key not in data:
            return default
        return _parse_typed(data.pop(key), kind, f"[{section}] {key}")

    def reject_leftovers(section: str, data: dict[str, str]) -> None:
        if data:
            raise ConfigError(f"unknown key {next(iter(data))!r} in [{section}]")

    cfg = RunConfig()

    run = items("run")
    cfg.seed = take("run", run, "seed", int, cfg.seed)
    cfg.out = take("run", run, "out", str, cfg.out)
    reject_leftovers("run", run)

    ds = items("dataset")
    cfg.dataset = DatasetConfig(
        root=take("dataset", ds, "root", str, ""),
        clips=take("dataset", ds, "clips", str, ""),
    )
    reject_leftovers("dataset", ds)

    g = items("generator")
    positions_raw = g.pop("nonlocal_positions", None)
    default_gen = GeneratorSpec()
    positions = default_gen.nonlocal_positions
    if positions_raw is not None:
        positions = (
            tuple(int(p) for p in positions_raw.split(",") if p.strip() != "")
            if positions_raw.strip()
            else ()
        )
    cfg.generator = GeneratorSpec(
        variant=take("generator", g, "variant", str, default_gen.variant),
        base_channels=take("generator", g, "base_channels", int, default_gen.base_channels),
        num_blocks=take("generator", g, "num_blocks", int, default_gen.num_blocks),
        nonlocal_positions=positions,
        pairwise=take("generator", g, "pairwise", str, default_gen.pairwise),
    )
    reject_leftovers("generator", g)

    d = items("discriminator")
    cfg.discriminator = DiscriminatorSpec(
        base_channels=take("discriminator", d, "base_channels", int, 32),
        depth=take("discriminator", d, "depth", int, 3),
    )
    reject_leftovers("discriminator", d)

    cfg.degradation = _parse_degradation(items("degradation"))

    lo = items("loss")
    weights = dict(LossConfig().weights)
    for name in TERM_NAMES:
        if name in lo:
            weights[name] = _parse_typed(lo.pop(name), float, f"[loss] {name}")
    extras = {}
    for key, kind in _LOSS_EXTRA_KEYS.items():
        if key in lo:
            extras[key] = _parse_typed(lo.pop(key), kind, f"[loss] {key}")
    reject_leftovers("loss", lo)
    cfg.loss = LossConfig(weights=weights, **extras)

    tr = items("train")
    train_kwargs = {}
    for key, kind in _TRAIN_KEYS.items():
        if key in tr:
            train_kwargs[key] = _parse_typed(tr.pop(key), kind, f"[train] {key}")
    reject_leftovers("train", tr)
    cfg.train = TrainConfig(seed=cfg.seed, **train_kwargs)

    ev = items("evaluate")
    scales_raw = ev.pop("scales", None)
    methods_raw = ev.pop("methods", None)
    models = {}
    for key in list(ev):
        if key.startswith("model."):
            models[key[len("model.") :]] = ev.pop(key)
    default_eval = EvalOptions()
    scales = default_eval.scales
    if scales_raw is not None:
        scales = tuple(int(s) for s in scales_raw.split(",") if s.strip())
    methods = default_eval.methods
    if methods_raw is not None:
        methods = tuple(m.strip() for m in methods_raw.split(",") if m.strip())
    for scale in scales:
        if scale not in (2, 4):
            raise ConfigError(f"[evaluate] scales must be 2 or 4, got {scale}")
    for method in methods:
        if method not in ("bicubic", "bilinear"):
            raise ConfigError(f"[evaluate] unknown method {method!r}")
    cfg.evaluate = EvalOptions(
        scales=scales,
        methods=methods,
        models=models,
        extractor=take("evaluate", ev, "extractor", str, ""),
    )
    reject_leftovers("evaluate", ev)

    up = items("upscale")
    scale = take("upscale", up, "scale", int, 2)
    if scale not in (2, 4):
        raise ConfigError(f"[upscale] scale must be 2 or 4, got {scale}")
    cfg.upscale = UpscaleOptions(
        checkpoint=take("upscale", up, "checkpoint", str, ""),
        input=take("upscale", up, "input", str, ""),
        scale=scale,
    )
    reject_leftovers("upscale", up)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines: list[str] = []

    def section(name: str, pairs: list[tuple[str, object]]) -> None:
        lines.append(f"[{name}]")
        for key, value in pairs:
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")

    section("run", [("seed", cfg.seed), ("out", cfg.out)])
    section("dataset", [("root", cfg.dataset.root), ("clips", cfg.dataset.clips)])
    section(
        "generator",
        [
            ("variant", cfg.generator.variant),
            ("base_channels", cfg.generator.base_channels),
            ("num_blocks", cfg.generator.num_blocks),
            ("nonlocal_positions", ",".join(str(p) for p in cfg.generator.nonlocal_positions)),
            ("pairwise", cfg.generator.pairwise),
        ],
    )
    section(
        "discriminator",
        [
            ("base_channels", cfg.discriminator.base_channels),
            ("depth", cfg.discriminator.depth),
        ],
    )
    deg_pairs: list[tuple[str, object]] = [("seed", cfg.degradation.seed)]
    for idx, step in enumerate(cfg.degradation.steps, start=1):
        deg_pairs.append((f"step.{idx}.kind", step.kind))
        deg_pairs.append((f"step.{idx}.probability", step.probability))
        for key in sorted(step.params):
            deg_pairs.append((f"step.{idx}.{key}", _fmt_step_param(step.params[key])))
    section("degradation", deg_pairs)
    loss_pairs: list[tuple[str, object]] = [
        (name, cfg.loss.weights[name]) for name in TERM_NAMES
    ]
    loss_pairs += [
        ("charbonnier_epsilon", cfg.loss.charbonnier_epsilon),
        ("pyramid_levels", cfg.loss.pyramid_levels),
        ("perceptual_norm", cfg.loss.perceptual_norm),
        ("laplacian_kernel", cfg.loss.laplacian_kernel),
    ]
    section("loss", loss_pairs)
    section("train", [(key, getattr(cfg.train, key)) for key in _TRAIN_KEYS])
    eval_pairs: list[tuple[str, object]] = [
        ("scales", ",".join(str(s) for s in cfg.evaluate.scales)),
        ("methods", ",".join(cfg.evaluate.methods)),
        ("extractor", cfg.evaluate.extractor),
    ]
    for name in sorted(cfg.evaluate.models):
        eval_pairs.append((f"model.{name}", cfg.evaluate.models[name]))
    section("evaluate", eval_pairs)
    section(
        "upscale",
        [
            ("checkpoint", cfg.upscale.checkpoint),
            ("input", cfg.upscale.input),
            ("scale", cfg.upscale.scale),
        ],
    )
    return "\n".join(lines)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())
