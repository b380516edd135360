"""Seeded image degradation operators and their composable pipeline.

Nine operators produce realistic low-quality inputs from clean sequences:
blur, noise, contrast/brightness, wavelet detail scaling, localized cut-blur,
iterative diffusion, content-aware blur, adaptive blur, and JPEG round-trips.
Every operator is pure given (input, parameters, seed), keeps values inside
[0, 1], and has an identity configuration. Randomness that would break
temporal coherence (masks, parameter draws) is drawn once per sequence;
additive noise is the one per-frame-independent operator.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ConfigError, ShapeError
from .kernels import SOBEL_H, SOBEL_V, correlate2d, gaussian_kernel_1d, kernel_size_for_sigma
from .seqcore import FrameSequence, downsample, upsample

OPERATOR_KINDS = (
    "gaussian_blur",
    "gaussian_noise",
    "contrast_brightness",
    "frequency_guided",
    "cutblur",
    "diffusion",
    "content_aware",
    "adaptive",
    "jpeg",
)


def _separable_blur(frames: torch.Tensor, kernel_size: int, sigma: float, padding_mode: str) -> torch.Tensor:
    if sigma == 0 or kernel_size == 1:
        return frames
    taps = gaussian_kernel_1d(kernel_size, sigma, dtype=frames.dtype)
    n, c, h, w = frames.shape
    x = frames.reshape(n * c, 1, h, w)
    half = kernel_size // 2
    x = F.pad(x, (0, 0, half, half), mode=padding_mode)
    x = F.conv2d(x, taps.view(1, 1, -1, 1))
    x = F.pad(x, (half, half, 0, 0), mode=padding_mode)
    x = F.conv2d(x, taps.view(1, 1, 1, -1))
    return x.reshape(n, c, h, w)


def gaussian_blur(
    seq: FrameSequence, kernel_size: int, sigma: float, padding_mode: str = "replicate"
) -> FrameSequence:
    """Convolve every frame and channel with one normalised Gaussian kernel."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigError(f"kernel_size must be odd, got {kernel_size}")
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    out = _separable_blur(seq.frames, kernel_size, sigma, padding_mode)
    return seq.with_frames(out.clamp(0.0, 1.0))


def gaussian_noise(seq: FrameSequence, sigma: float, seed: int) -> FrameSequence:
    """Add i.i.d. zero-mean Gaussian noise per element, then clamp.

    Noise is independent across frames (sensor noise is temporally
    uncorrelated); the seed fixes the draw bit-exactly.
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return seq
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=tuple(seq.frames.shape))
    out = seq.frames + torch.from_numpy(noise).to(seq.frames.dtype)
    return seq.with_frames(out.clamp(0.0, 1.0))


def contrast_brightness(seq: FrameSequence, contrast: float, brightness: float) -> FrameSequence:
    """Scale contrast about mid-gray, then shift brightness, then clamp."""
    if contrast <= 0:
        raise ConfigError(f"contrast must be positive, got {contrast}")
    out = contrast * (seq.frames - 0.5) + 0.5 + brightness
    return seq.with_frames(out.clamp(0.0, 1.0))


def _haar_forward(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a - b + c - d) * 0.5
    hl = (a + b - c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, lh, hl, hh


def _haar_inverse(ll, lh, hl, hh) -> torch.Tensor:
    a = (ll + lh + hl + hh) * 0.5
    b = (ll - lh + hl - hh) * 0.5
    c = (ll + lh - hl - hh) * 0.5
    d = (ll - lh - hl + hh) * 0.5
    n, ch, h2, w2 = ll.shape
    out = ll.new_empty((n, ch, h2 * 2, w2 * 2))
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = b
    out[..., 1::2, 0::2] = c
    out[..., 1::2, 1::2] = d
    return out


def frequency_guided(
    seq: FrameSequence, detail_scale: float, zero_details: bool, seed: int = 0
) -> FrameSequence:
    """Scale or zero the detail subbands of a single-level Haar transform.

    The orthonormal transform reconstructs perfectly, so detail_scale=1 with
    zero_details off is the identity up to float round-off.
    """
    if seq.height % 2 or seq.width % 2:
        raise ShapeError("frequency_guided requires even H and W")
    ll, lh, hl, hh = _haar_forward(seq.frames)
    s = 0.0 if zero_details else detail_scale
    out = _haar_inverse(ll, lh * s, hl * s, hh * s)
    return seq.with_frames(out.clamp(0.0, 1.0))


def cutblur(
    seq: FrameSequence, mask_fraction: float, blur_factor: int, seed: int
) -> FrameSequence:
    """Replace one seeded rectangle with a down-up resampled version of itself.

    The same rectangle is used for all frames; pixels outside it are
    bit-identical to the input. Area of the rectangle is ~mask_fraction of
    the frame. H and W must be divisible by blur_factor.
    """
    if not 0.0 < mask_fraction <= 1.0:
        raise ConfigError(f"mask_fraction must be in (0, 1], got {mask_fraction}")
    if blur_factor not in (2, 4):
        raise ConfigError(f"blur_factor must be 2 or 4, got {blur_factor}")
    h, w = seq.height, seq.width
    side = float(np.sqrt(mask_fraction))
    rect_h = min(h, max(1, round(h * side)))
    rect_w = min(w, max(1, round(w * side)))
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - rect_h + 1))
    left = int(rng.integers(0, w - rect_w + 1))
    blurred = upsample(downsample(seq, blur_factor, "bilinear"), blur_factor, "bilinear")
    out = seq.frames.clone()
    out[..., top : top + rect_h, left : left + rect_w] = blurred.frames[
        ..., top : top + rect_h, left : left + rect_w
    ]
    return seq.with_frames(out)


def diffusion(
    seq: FrameSequence, iterations: int, sigma_step: float, padding_mode: str = "replicate"
) -> FrameSequence:
    """Iterated Gaussian blurring; iterations=0 is the identity."""
    if iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {iterations}")
    kernel_size = kernel_size_for_sigma(sigma_step)
    out = seq
    for _ in range(iterations):
        out = gaussian_blur(out, kernel_size, sigma_step, padding_mode)
    return out


def _gradient_magnitude_map(frames: torch.Tensor) -> torch.Tensor:
    """Per-frame Sobel magnitude of the channel mean, normalised to [0, 1]."""
    gray = frames.mean(dim=1, keepdim=True)
    gx = correlate2d(gray, SOBEL_H)
    gy = correlate2d(gray, SOBEL_V)
    mag = torch.sqrt(gx * gx + gy * gy)
    peak = mag.amax(dim=(2, 3), keepdim=True).clamp_min(1e-12)
    return mag / peak


def _spatially_varying_blur(
    frames: torch.Tensor, sigma_map: torch.Tensor, kernel_size: int, padding_mode: str
) -> torch.Tensor:
    """Per-pixel Gaussian blur: each output pixel averages its k x k window
    with weights from its own sigma. sigma_map: (N, 1, H, W)."""
    n, c, h, w = frames.shape
    half = kernel_size // 2
    dy = torch.arange(-half, half + 1, dtype=frames.dtype)
    dist2 = (dy.view(-1, 1) ** 2 + dy.view(1, -1) ** 2).reshape(-1)  # (k*k,)
    sig = sigma_map.clamp_min(1e-6)
    out = frames.new_empty(frames.shape)
    for i in range(n):
        weights = torch.exp(
            -dist2.view(-1, 1, 1) / (2.0 * sig[i, 0].unsqueeze(0) ** 2)
        )  # (k*k, H, W)
        weights = weights / weights.sum(dim=0, keepdim=True)
        padded = F.pad(frames[i : i + 1], (half, half, half, half), mode=padding_mode)
        patches = F.unfold(padded, kernel_size).reshape(c, kernel_size * kernel_size, h, w)
        out[i] = (patches * weights.unsqueeze(0)).sum(dim=1)
    return out


def content_aware(
    seq: FrameSequence, sigma_min: float, sigma_max: float, padding_mode: str = "replicate"
) -> FrameSequence:
    """Blur with per-pixel sigma driven by local gradient magnitude.

    sigma = sigma_max - (sigma_max - sigma_min) * m, where m is the Sobel
    magnitude normalised to [0, 1] per frame, so high-detail areas are
    blurred least and smooth regions most.
    """
    if not 0 <= sigma_min <= sigma_max:
        raise ConfigError(f"need 0 <= sigma_min <= sigma_max, got {sigma_min}, {sigma_max}")
    if sigma_max == 0:
        return seq
    m = _gradient_magnitude_map(seq.frames)
    sigma_map = sigma_max - (sigma_max - sigma_min) * m
    kernel_size = kernel_size_for_sigma(sigma_max)
    out = _spatially_varying_blur(seq.frames, sigma_map, kernel_size, padding_mode)
    return seq.with_frames(out.clamp(0.0, 1.0))


def adaptive(
    seq: FrameSequence,
    sigma_min: float,
    sigma_max: float,
    iterations: int,
    padding_mode: str = "replicate",
) -> FrameSequence:
    """Iterated content-aware blur, recomputing the gradient map each pass."""
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    out = seq
    for _ in range(iterations):
        out = content_aware(out, sigma_min, sigma_max, padding_mode)
    return out


def jpeg_degrade(seq: FrameSequence, quality: int) -> FrameSequence:
    """Round-trip every frame through a baseline JPEG encode at `quality`.

    Frames are quantised to 8 bits for the codec and mapped back to [0, 1].
    """
    if not 1 <= quality <= 100:
        raise ConfigError(f"quality must be in [1, 100], got {quality}")
    frames_out = []
    arr = (seq.frames.clamp(0, 1) * 255.0).round().to(torch.uint8)
    for i in range(seq.n_frames):
        img = Image.fromarray(arr[i].permute(1, 2, 0).numpy(), mode="RGB")
        buf = io.BytesIO()
        try:
            img.save(buf, format="JPEG", quality=quality)
            buf.seek(0)
            with Image.open(buf) as decoded:
                back = np.asarray(decoded.convert("RGB"), dtype=np.float32) / 255.0
        except OSError as exc:
            raise IOError(f"JPEG codec failure on frame {i}: {exc}") from exc
        frames_out.append(torch.from_numpy(back).permute(2, 0, 1).to(seq.frames.dtype))
    return seq.with_frames(torch.stack(frames_out))


@dataclass(frozen=True)
class OperatorConfig:
    """One pipeline step: operator kind, fire probability, parameter ranges.

    Range-valued params are (lo, hi) tuples sampled uniformly per sequence;
    scalar params are fixed. Integer ranges sample integers inclusively.
    """

    kind: str
    probability: float = 1.0
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in OPERATOR_KINDS:
            raise ConfigError(f"unknown degradation kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"probability must be in [0, 1], got {self.probability}")
        _validate_params(self.kind, self.params)


_PARAM_SCHEMAS: dict[str, dict[str, type]] = {
    "gaussian_blur": {"kernel_size": int, "sigma": float},
    "gaussian_noise": {"sigma": float},
    "contrast_brightness": {"contrast": float, "brightness": float},
    "frequency_guided": {"detail_scale": float, "zero_details": bool},
    "cutblur": {"mask_fraction": float, "blur_factor": int},
    "diffusion": {"iterations": int, "sigma_step": float},
    "content_aware": {"sigma_min": float, "sigma_max": float},
    "adaptive": {"sigma_min": float, "sigma_max": float, "iterations": int},
    "jpeg": {"quality": int},
}

# Params that stay fixed (never sampled from a range).
_SCALAR_ONLY = {"kernel_size", "blur_factor", "zero_details"}


def _validate_params(kind: str, params: dict[str, Any]) -> None:
    schema = _PARAM_SCHEMAS[kind]
    for key, value in params.items():
        if key not in schema:
            raise ConfigError(f"unknown param {key!r} for {kind}")
        if key in _SCALAR_ONLY:
            if isinstance(value, tuple):
                raise ConfigError(f"param {key!r} must be a scalar")
        elif isinstance(value, tuple):
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigError(f"range for {key!r} must be (lo, hi) with lo <= hi")
    if kind == "gaussian_blur":
        ks = params.get("kernel_size", 9)
        if ks % 2 == 0 or ks < 1:
            raise ConfigError(f"kernel_size must be odd, got {ks}")
    lo = lambda v: v[0] if isinstance(v, tuple) else v
    if "sigma" in params and lo(params["sigma"]) < 0:
        raise ConfigError("sigma must be >= 0")
    if kind == "jpeg" and "quality" in params:
        q = params["quality"]
        q_lo, q_hi = (q if isinstance(q, tuple) else (q, q))
        if q_lo < 1 or q_hi > 100:
            raise ConfigError("jpeg quality must be within [1, 100]")


@dataclass(frozen=True)
class DegradationPlan:
    """Ordered, seeded list of degradation steps.

    The same (plan, seed, input) triple always produces a bit-identical
    output; step order is significant and preserved.
    """

    steps: tuple[OperatorConfig, ...] = ()
    seed: int = 0


@dataclass(frozen=True)
class SampledStep:
    """The concrete draw for one plan step on one sequence (manifest record)."""

    kind: str
    fired: bool
    params: dict[str, Any]
    op_seed: int

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "fired": self.fired, "params": self.params, "op_seed": self.op_seed}


_DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian_blur": {"kernel_size": 9, "sigma": (0.2, 2.0)},
    "gaussian_noise": {"sigma": (0.0, 0.05)},
    "contrast_brightness": {"contrast": (0.8, 1.2), "brightness": (-0.1, 0.1)},
    "frequency_guided": {"detail_scale": (0.0, 1.5), "zero_details": False},
    "cutblur": {"mask_fraction": (0.1, 0.5), "blur_factor": 2},
    "diffusion": {"iterations": (1, 3), "sigma_step": (0.3, 0.8)},
    "content_aware": {"sigma_min": (0.0, 0.5), "sigma_max": (0.5, 1.5)},
    "adaptive": {"sigma_min": (0.0, 0.5), "sigma_max": (0.5, 1.5), "iterations": (1, 3)},
    "jpeg": {"quality": (50, 95)},
}

_INT_PARAMS = {"iterations", "quality", "kernel_size", "blur_factor"}


def sample_plan(plan: DegradationPlan, seed: int | None = None) -> list[SampledStep]:
    """Draw fire/params for every step from one seeded stream, in step order."""
    rng = np.random.default_rng(plan.seed if seed is None else seed)
    sampled = []
    for idx, step in enumerate(plan.steps):
        fired = bool(rng.random() < step.probability)
        merged = dict(_DEFAULTS[step.kind])
        merged.update(step.params)
        drawn: dict[str, Any] = {}
        if fired:
            for key, value in merged.items():
                if isinstance(value, tuple):
                    lo, hi = value
                    if key in _INT_PARAMS:
                        drawn[key] = int(rng.integers(int(lo), int(hi) + 1))
                    else:
                        drawn[key] = float(rng.uniform(lo, hi))
                else:
                    drawn[key] = value
            if step.kind in ("content_aware", "adaptive") and drawn["sigma_min"] > drawn["sigma_max"]:
                drawn["sigma_min"], drawn["sigma_max"] = drawn["sigma_max"], drawn["sigma_min"]
        op_seed = int(rng.integers(0, 2**62))
        sampled.append(SampledStep(kind=step.kind, fired=fired, params=drawn, op_seed=op_seed))
    return sampled


def apply_sampled(seq: FrameSequence, sampled: list[SampledStep]) -> FrameSequence:
    """Apply already-drawn steps in order; skipped steps pass through."""
    out = seq
    for step in sampled:
        if not step.fired:
            continue
        p = step.params
        if step.kind == "gaussian_blur":
            out = gaussian_blur(out, p["kernel_size"], p["sigma"])
        elif step.kind == "gaussian_noise":
            out = gaussian_noise(out, p["sigma"], step.op_seed)
        elif step.kind == "contrast_brightness":
            out = contrast_brightness(out, p["contrast"], p["brightness"])
        elif step.kind == "frequency_guided":
            out = frequency_guided(out, p["detail_scale"], p["zero_details"], step.op_seed)
        elif step.kind == "cutblur":
            out = cutblur(out, p["mask_fraction"], p["blur_factor"], step.op_seed)
        elif step.kind == "diffusion":
            out = diffusion(out, p["iterations"], p["sigma_step"])
        elif step.kind == "content_aware":
            out = content_aware(out, p["sigma_min"], p["sigma_max"])
        elif step.kind == "adaptive":
            out = adaptive(out, p["sigma_min"], p["sigma_max"], p["iterations"])
        elif step.kind == "jpeg":
            out = jpeg_degrade(out, p["quality"])
    return out


def apply_plan(
    seq: FrameSequence,
    plan: DegradationPlan,
    seed: int | None = None,
    log: list[SampledStep] | None = None,
) -> FrameSequence:
    """Sample and apply the plan. Pass `log` to capture the parameter draws."""
    sampled = sample_plan(plan, seed)
    if log is not None:
        log.extend(sampled)
    return apply_sampled(seq, sampled)


def default_plan(seed: int = 0) -> DegradationPlan:
    """Mild blur/noise/contrast/jpeg pipeline used when no plan is configured."""
    return DegradationPlan(
        steps=(
            OperatorConfig("gaussian_blur", 0.5, {"kernel_size": 9, "sigma": (0.2, 2.0)}),
            OperatorConfig("gaussian_noise", 0.5, {"sigma": (0.0, 0.05)}),
            OperatorConfig(
                "contrast_brightness", 0.3, {"contrast": (0.8, 1.2), "brightness": (-0.1, 0.1)}
            ),
            OperatorConfig("jpeg", 0.3, {"quality": (50, 95)}),
        ),
        seed=seed,
    )
