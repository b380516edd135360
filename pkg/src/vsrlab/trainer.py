"""Patch-based, leaf-by-leaf, 2x/4x cascaded adversarial training.

Every crop drives three passes: a 2x pass over a grid of small patches, a
leaf pass repeating it at doubled patch size, and a cascaded 4x pass. Each
patch contributes one gradient to a per-network pool that holds the running
mean; after the full schedule the pooled gradient is clipped once and each
network receives exactly one parameter update. Generator and discriminator
pools never mix.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from .checkpoint import load_checkpoint, save_checkpoint
from .degrade import DegradationPlan, SampledStep, apply_plan
from .disc import DiscriminatorSpec, UNetDiscriminator
from .errors import ConfigError, ShapeError
from .gen import Generator, GeneratorSpec
from .loss import FeatureExtractor, LossBundle, LossConfig, adversarial_loss, evaluate_terms
from .seqcore import (
    AugmentationSpec,
    FrameSequence,
    augment,
    crop_fixed,
    derive_seed,
    downsample,
    is_too_dark,
    load_clip,
)

log = logging.getLogger(__name__)

# Terms evaluated on the reassembled full prediction; everything else is
# computed per patch.
WHOLE_IMAGE_TERMS = ("ssim", "perceptual")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    clip_norm: float = 1.0
    patch_size: int = 16
    leaf_scale_steps: int = 2
    crop_size: int = 128
    seq_len: int = 3
    epochs: int = 1
    seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    dark_threshold: float = 0.05
    patch_order: str = "sequential"
    patch_stride: int = 1
    checkpoint_every: int = 1
    mixed_precision: bool = False
    resume: str = ""

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("learning_rate and clip_norm must be positive")
        if self.leaf_scale_steps < 1:
            raise ConfigError("leaf_scale_steps must be >= 1")
        divisor = 2 * self.patch_size * 2 ** (self.leaf_scale_steps - 1)
        if self.crop_size % divisor:
            raise ConfigError(
                f"crop_size {self.crop_size} must be divisible by {divisor} "
                f"(2 * patch_size * 2^(leaf_scale_steps - 1))"
            )
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.patch_order not in ("sequential", "random"):
            raise ConfigError("patch_order must be 'sequential' or 'random'")
        if self.patch_stride < 1:
            raise ConfigError("patch_stride must be >= 1")
        if self.seq_len < 1 or self.epochs < 1:
            raise ConfigError("seq_len and epochs must be >= 1")


class GradientPool:
    """Running mean of gradient contributions for one parameter set."""

    def __init__(self, params: Sequence[Tensor]):
        self._sums = [torch.zeros_like(p) for p in params]
        self.count = 0

    def add(self, grads: Sequence[Tensor]) -> None:
        if len(grads) != len(self._sums):
            raise ShapeError("gradient list length mismatch")
        with torch.no_grad():
            for acc, g in zip(self._sums, grads):
                if g.shape != acc.shape:
                    raise ShapeError(f"gradient shape {tuple(g.shape)} vs {tuple(acc.shape)}")
                acc.add_(g)
        self.count += 1

    def mean(self) -> list[Tensor]:
        if self.count == 0:
            raise ConfigError("gradient pool is empty")
        return [acc / self.count for acc in self._sums]

    def clear(self) -> None:
        for acc in self._sums:
            acc.zero_()
        self.count = 0


def accumulate_gradients(pool: GradientPool, grads: Sequence[Tensor]) -> GradientPool:
    """Fold one more gradient contribution into the pool's running mean."""
    pool.add(grads)
    return pool


def clip_gradients(grads: Sequence[Tensor], clip_norm: float) -> list[Tensor]:
    """Scale the whole gradient list so its global L2 norm is <= clip_norm."""
    if clip_norm <= 0:
        raise ConfigError("clip_norm must be positive")
    total = torch.sqrt(sum((g.double() ** 2).sum() for g in grads))
    if total <= clip_norm:
        return list(grads)
    scale = clip_norm / total.item()
    return [g * scale for g in grads]


@dataclass
class OptimizerState:
    """First/second moment state for the adaptive update (unused for sgd)."""

    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: list[Tensor] = field(default_factory=list)
    v: list[Tensor] = field(default_factory=list)
    step: int = 0

    @classmethod
    def create(cls, params: Sequence[Tensor], config: TrainConfig) -> "OptimizerState":
        state = cls(
            kind=config.optimizer,
            lr=config.learning_rate,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            epsilon=config.adam_epsilon,
        )
        if state.kind == "adam":
            state.m = [torch.zeros_like(p) for p in params]
            state.v = [torch.zeros_like(p) for p in params]
        return state


def optimizer_update(params: Sequence[Tensor], grads: Sequence[Tensor], opt: OptimizerState) -> None:
    """Apply one parameter update in place from a finalised gradient list."""
    with torch.no_grad():
        if opt.kind == "sgd":
            for p, g in zip(params, grads):
                p.sub_(opt.lr * g)
            return
        opt.step += 1
        bias1 = 1.0 - opt.beta1**opt.step
        bias2 = 1.0 - opt.beta2**opt.step
        for p, g, m, v in zip(params, grads, opt.m, opt.v):
            m.mul_(opt.beta1).add_(g, alpha=1.0 - opt.beta1)
            v.mul_(opt.beta2).addcmul_(g, g, value=1.0 - opt.beta2)
            m_hat = m / bias1
            v_hat = v / bias2
            p.addcdiv_(m_hat, v_hat.sqrt().add_(opt.epsilon), value=-opt.lr)


class TrainState:
    """Owns the two networks, their gradient pools, optimizers and counters."""

    def __init__(
        self,
        generator: Generator,
        discriminator: UNetDiscriminator,
        config: TrainConfig,
        loss_config: LossConfig,
        extractor: FeatureExtractor | None = None,
    ):
        self.generator = generator
        self.discriminator = discriminator
        self.config = config
        self.loss_config = loss_config
        self.extractor = extractor
        self.gen_params = list(generator.parameters())
        self.disc_params = list(discriminator.parameters())
        self.gen_pool = GradientPool(self.gen_params)
        self.disc_pool = GradientPool(self.disc_params)
        self.gen_opt = OptimizerState.create(self.gen_params, config)
        self.disc_opt = OptimizerState.create(self.disc_params, config)
        self.rng = np.random.default_rng(derive_seed(config.seed, "trainer"))
        self.counters: dict[str, int] = {
            "gen_calls": 0,
            "gen_updates": 0,
            "disc_updates": 0,
            "patch_losses": 0,
            "crops_used": 0,
            "crops_skipped_dark": 0,
            "epochs_done": 0,
        }

    @classmethod
    def create(
        cls,
        gen_spec: GeneratorSpec,
        disc_spec: DiscriminatorSpec,
        config: TrainConfig,
        loss_config: LossConfig,
        extractor: FeatureExtractor | None = None,
    ) -> "TrainState":
        torch.manual_seed(derive_seed(config.seed, "init"))
        return cls(Generator(gen_spec), UNetDiscriminator(disc_spec), config, loss_config, extractor)

    @property
    def adversarial_active(self) -> bool:
        return self.loss_config.weights.get("adversarial", 0.0) > 0


def _grads_or_zeros(loss: Tensor, params: Sequence[Tensor], retain: bool) -> list[Tensor]:
    if not loss.requires_grad:
        return [torch.zeros_like(p) for p in params]
    grads = torch.autograd.grad(loss, params, retain_graph=retain, allow_unused=True)
    return [g if g is not None else torch.zeros_like(p) for g, p in zip(grads, params)]


def _patch_order(
    state: TrainState, config: TrainConfig, rows: int, cols: int
) -> list[tuple[int, int]]:
    order = [(r, c) for r in range(rows) for c in range(cols)]
    if config.patch_order == "random":
        state.rng.shuffle(order)
    return order[:: config.patch_stride]


class _TermTally:
    """Mean tracker for raw per-term values across a step's evaluations."""

    def __init__(self) -> None:
        self.sums: dict[str, float] = {}
        self.counts: dict[str, int] = {}

    def add(self, terms: dict[str, Tensor]) -> None:
        for name, value in terms.items():
            self.sums[name] = self.sums.get(name, 0.0) + float(value.item())
            self.counts[name] = self.counts.get(name, 0) + 1

    def bundle(self, weights: dict[str, float]) -> LossBundle:
        means = {name: self.sums[name] / self.counts[name] for name in self.sums}
        total = sum(weights[name] * value for name, value in means.items())
        return LossBundle(terms=means, total=float(total))


def _cascaded_generate(state: TrainState, lr_patch: Tensor, passes: int) -> Tensor:
    out = lr_patch
    for _ in range(passes):
        out = state.generator(out)
        state.counters["gen_calls"] += 1
    return out


def _patch_step(
    hr_crop: FrameSequence,
    source: FrameSequence,
    state: TrainState,
    config: TrainConfig,
    down_factor: int,
    patch_size: int,
    generator_passes: int,
) -> LossBundle:
    """Shared body of the 2x, leaf and 4x passes.

    Downsamples the (possibly degraded) source by `down_factor`, walks the
    patch grid, runs each LR patch through the generator `generator_passes`
    times, accumulates per-patch gradients for both networks, then adds the
    whole-image terms on the reassembled prediction. No parameter update
    happens here.
    """
    loss_config = state.loss_config
    lr_seq = downsample(source, down_factor, "bicubic")
    if lr_seq.height % patch_size or lr_seq.width % patch_size:
        raise ShapeError(
            f"LR {lr_seq.height}x{lr_seq.width} not divisible by patch size {patch_size}"
        )
    rows, cols = lr_seq.height // patch_size, lr_seq.width // patch_size
    out_size = patch_size * (2**generator_passes)
    patch_terms = tuple(
        t for t in loss_config.active_terms() if t not in WHOLE_IMAGE_TERMS and t != "adversarial"
    )
    whole_terms = tuple(t for t in loss_config.active_terms() if t in WHOLE_IMAGE_TERMS)
    order = _patch_order(state, config, rows, cols)
    full_grid = len(order) == rows * cols
    retain = bool(whole_terms) and full_grid
    tally = _TermTally()
    fakes: dict[tuple[int, int], Tensor] = {}
    for r, c in order:
        lr_patch = lr_seq.frames[
            ..., r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size
        ]
        hr_patch = hr_crop.frames[
            ..., r * out_size : (r + 1) * out_size, c * out_size : (c + 1) * out_size
        ]
        fake = _cascaded_generate(state, lr_patch, generator_passes)
        fakes[(r, c)] = fake
        terms = evaluate_terms(hr_patch, fake, loss_config, state.extractor, only=patch_terms)
        if state.adversarial_active:
            fake_logits = state.discriminator(fake)
            terms["adversarial"] = adversarial_loss(fake_logits, None, "generator")
        if terms:
            weighted = sum(loss_config.weights[name] * value for name, value in terms.items())
            accumulate_gradients(
                state.gen_pool, _grads_or_zeros(weighted, state.gen_params, retain=retain)
            )
            state.counters["patch_losses"] += 1
            tally.add(terms)
        if state.adversarial_active:
            d_loss = adversarial_loss(
                state.discriminator(fake.detach()), state.discriminator(hr_patch), "discriminator"
            )
            accumulate_gradients(
                state.disc_pool, _grads_or_zeros(d_loss, state.disc_params, retain=False)
            )
    if whole_terms and full_grid:
        row_strips = [
            torch.cat([fakes[(r, c)] for c in range(cols)], dim=-1) for r in range(rows)
        ]
        assembled = torch.cat(row_strips, dim=-2)
        terms = evaluate_terms(
            hr_crop.frames, assembled, loss_config, state.extractor, only=whole_terms
        )
        weighted = sum(loss_config.weights[name] * value for name, value in terms.items())
        accumulate_gradients(
            state.gen_pool, _grads_or_zeros(weighted, state.gen_params, retain=False)
        )
        tally.add(terms)
    return tally.bundle(loss_config.weights)


def train_step_2x(
    hr_crop: FrameSequence,
    state: TrainState,
    config: TrainConfig,
    source: FrameSequence | None = None,
    patch_size: int | None = None,
) -> LossBundle:
    """One 2x pass: downsample by 2, generate each patch once, accumulate."""
    return _patch_step(
        hr_crop,
        source if source is not None else hr_crop,
        state,
        config,
        down_factor=2,
        patch_size=patch_size if patch_size is not None else config.patch_size,
        generator_passes=1,
    )


def train_step_4x(
    hr_crop: FrameSequence,
    state: TrainState,
    config: TrainConfig,
    source: FrameSequence | None = None,
) -> LossBundle:
    """One cascaded 4x pass: downsample by 4, generate each patch twice."""
    return _patch_step(
        hr_crop,
        source if source is not None else hr_crop,
        state,
        config,
        down_factor=4,
        patch_size=config.patch_size,
        generator_passes=2,
    )


def leaf_step(
    hr_crop: FrameSequence,
    state: TrainState,
    config: TrainConfig,
    source: FrameSequence | None = None,
    scale_step: int = 1,
) -> LossBundle:
    """Repeat the 2x pass at a doubled (or further doubled) patch size."""
    return train_step_2x(
        hr_crop, state, config, source, patch_size=config.patch_size * 2**scale_step
    )


def _merge_bundles(bundles: Sequence[LossBundle], weights: dict[str, float]) -> LossBundle:
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for b in bundles:
        for name, value in b.terms.items():
            sums[name] = sums.get(name, 0.0) + value
            counts[name] = counts.get(name, 0) + 1
    means = {name: sums[name] / counts[name] for name in sums}
    total = sum(weights.get(name, 0.0) * value for name, value in means.items())
    return LossBundle(terms=means, total=float(total))


def apply_pooled_update(state: TrainState, network: str) -> bool:
    """Clip the pooled mean gradient and apply one optimizer step.

    network: 'generator' or 'discriminator'. Returns False when the pool is
    empty (nothing accumulated). The pool is zeroed afterwards.
    """
    if network == "generator":
        pool, params, opt, key = state.gen_pool, state.gen_params, state.gen_opt, "gen_updates"
    elif network == "discriminator":
        pool, params, opt, key = state.disc_pool, state.disc_params, state.disc_opt, "disc_updates"
    else:
        raise ConfigError(f"unknown network {network!r}")
    if pool.count == 0:
        return False
    grads = clip_gradients(pool.mean(), state.config.clip_norm)
    optimizer_update(params, grads, opt)
    pool.clear()
    state.counters[key] += 1
    return True


def process_crop(
    hr_crop: FrameSequence,
    state: TrainState,
    config: TrainConfig,
    source: FrameSequence | None = None,
) -> LossBundle:
    """Run the full per-image schedule, then update each network once.

    Schedule: 2x pass at the base patch size, leaf passes at doubled sizes,
    then the cascaded 4x pass; all gradients land in the shared per-network
    pools before the single update.
    """
    bundles = [train_step_2x(hr_crop, state, config, source)]
    for step in range(1, config.leaf_scale_steps):
        bundles.append(leaf_step(hr_crop, state, config, source, scale_step=step))
    bundles.append(train_step_4x(hr_crop, state, config, source))
    apply_pooled_update(state, "generator")
    if state.adversarial_active:
        apply_pooled_update(state, "discriminator")
    state.counters["crops_used"] += 1
    return _merge_bundles(bundles, state.loss_config.weights)


@dataclass
class EpochSummary:
    epoch: int
    crops_used: int
    crops_skipped_dark: int
    clips_skipped: int
    mean_bundle: LossBundle | None

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "crops_used": self.crops_used,
            "crops_skipped_dark": self.crops_skipped_dark,
            "clips_skipped": self.clips_skipped,
            "loss": None
            if self.mean_bundle is None
            else {"total": self.mean_bundle.total, **self.mean_bundle.terms},
        }


def train_epoch(
    dataset: Sequence[tuple[str, FrameSequence | str | Path]],
    state: TrainState,
    config: TrainConfig,
    plan: DegradationPlan | None = None,
    epoch: int = 0,
    degradation_log: dict[str, list[SampledStep]] | None = None,
) -> EpochSummary:
    """One pass over the dataset.

    Per clip: sample an N-frame window, crop at a seeded random origin,
    augment, degrade, dark-filter (skip if dark), then run the full crop
    schedule. Seeds derive from (config.seed, clip_id, epoch) so reruns are
    bit-identical.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    bundles: list[LossBundle] = []
    skipped_dark = 0
    skipped_clips = 0
    for clip_id, item in dataset:
        seq = load_clip(item) if isinstance(item, (str, Path)) else item
        base = derive_seed(config.seed, clip_id, epoch)
        rng = np.random.default_rng(base)
        if seq.n_frames < config.seq_len:
            log.warning("clip %s shorter than seq_len, skipped", clip_id)
            skipped_clips += 1
            continue
        start = int(rng.integers(0, seq.n_frames - config.seq_len + 1))
        window = seq.window(start, config.seq_len)
        if window.height < config.crop_size or window.width < config.crop_size:
            log.warning("clip %s smaller than crop_size, skipped", clip_id)
            skipped_clips += 1
            continue
        top = int(rng.integers(0, window.height - config.crop_size + 1))
        left = int(rng.integers(0, window.width - config.crop_size + 1))
        hr_crop = crop_fixed(window, config.crop_size, (top, left))
        hr_crop = augment(hr_crop, AugmentationSpec.sample(derive_seed(base, "augment")))
        if plan is not None and plan.steps:
            clip_log: list[SampledStep] = []
            source = apply_plan(hr_crop, plan, seed=derive_seed(base, "degrade"), log=clip_log)
            if degradation_log is not None:
                degradation_log.setdefault(clip_id, []).extend(clip_log)
        else:
            source = hr_crop
        if is_too_dark(source, config.dark_threshold):
            state.counters["crops_skipped_dark"] += 1
            skipped_dark += 1
            continue
        bundles.append(process_crop(hr_crop, state, config, source))
    state.counters["epochs_done"] += 1
    if not bundles:
        log.warning("epoch %d: no usable crops", epoch)
        return EpochSummary(epoch, 0, skipped_dark, skipped_clips, None)
    return EpochSummary(
        epoch, len(bundles), skipped_dark, skipped_clips, _merge_bundles(bundles, state.loss_config.weights)
    )


def save_train_state(state: TrainState, path: str | Path) -> None:
    """Write both networks, optimizer moments and counters to one archive."""
    tensors: dict[str, Tensor] = {}
    for name, t in state.generator.state_dict().items():
        tensors[f"generator.{name}"] = t
    for name, t in state.discriminator.state_dict().items():
        tensors[f"discriminator.{name}"] = t
    for i, (m, v) in enumerate(zip(state.gen_opt.m, state.gen_opt.v)):
        tensors[f"opt_g.m.{i}"] = m
        tensors[f"opt_g.v.{i}"] = v
    for i, (m, v) in enumerate(zip(state.disc_opt.m, state.disc_opt.v)):
        tensors[f"opt_d.m.{i}"] = m
        tensors[f"opt_d.v.{i}"] = v
    meta = {
        "kind": "train_state",
        "generator_spec": state.generator.spec.to_json(),
        "discriminator_spec": state.discriminator.spec.to_json(),
        "train_config": asdict(state.config),
        "loss_config": {
            "weights": state.loss_config.weights,
            "charbonnier_epsilon": state.loss_config.charbonnier_epsilon,
            "pyramid_levels": state.loss_config.pyramid_levels,
            "perceptual_norm": state.loss_config.perceptual_norm,
            "laplacian_kernel": state.loss_config.laplacian_kernel,
        },
        "opt_steps": {"generator": state.gen_opt.step, "discriminator": state.disc_opt.step},
        "counters": state.counters,
        "rng_state": state.rng.bit_generator.state,
    }
    dtype = "float16" if state.config.mixed_precision else "float32"
    save_checkpoint(path, meta, tensors, dtype=dtype)


def load_train_state(path: str | Path, extractor: FeatureExtractor | None = None) -> TrainState:
    """Rebuild a TrainState from an archive written by save_train_state."""
    meta, tensors = load_checkpoint(path)
    if meta.get("kind") != "train_state":
        raise ConfigError(f"{path} does not hold a train state")
    config = TrainConfig(**meta["train_config"])
    loss_config = LossConfig(**meta["loss_config"])
    generator = Generator(GeneratorSpec.from_json(meta["generator_spec"]))
    discriminator = UNetDiscriminator(DiscriminatorSpec.from_json(meta["discriminator_spec"]))
    pick = lambda prefix: {
        k[len(prefix) :]: v.to(torch.float32) for k, v in tensors.items() if k.startswith(prefix)
    }
    generator.load_state_dict(pick("generator."))
    discriminator.load_state_dict(pick("discriminator."))
    state = TrainState(generator, discriminator, config, loss_config, extractor)
    for i in range(len(state.gen_opt.m)):
        state.gen_opt.m[i] = tensors[f"opt_g.m.{i}"].to(torch.float32)
        state.gen_opt.v[i] = tensors[f"opt_g.v.{i}"].to(torch.float32)
    for i in range(len(state.disc_opt.m)):
        state.disc_opt.m[i] = tensors[f"opt_d.m.{i}"].to(torch.float32)
        state.disc_opt.v[i] = tensors[f"opt_d.v.{i}"].to(torch.float32)
    state.gen_opt.step = int(meta["opt_steps"]["generator"])
    state.disc_opt.step = int(meta["opt_steps"]["discriminator"])
    state.counters.update({k: int(v) for k, v in meta["counters"].items()})
    state.rng.bit_generator.state = meta["rng_state"]
    return state
