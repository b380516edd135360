"""Loss terms and image metrics.

Direct (mse, charbonnier), perceptual (feature distance, ssim), and
edge-aware (laplacian, sobel, ricker, laplacian pyramid, gradient) losses,
plus psnr and the adversarial objectives. Every function takes plain
(B, C, H, W) tensors, works in float32 or float64, and is differentiable
w.r.t. its prediction argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ShapeError
from .kernels import (
    LAPLACIAN_K1,
    LAPLACIAN_K2,
    RICKER,
    SOBEL_H,
    SOBEL_V,
    correlate2d,
    gaussian_window_2d,
)

TERM_NAMES = (
    "mse",
    "charbonnier",
    "perceptual",
    "ssim",
    "sobel",
    "laplacian",
    "ricker",
    "pyramid",
    "gradient",
    "adversarial",
)

EDGE_KERNELS = {
    "laplacian_k1": LAPLACIAN_K1,
    "laplacian_k2": LAPLACIAN_K2,
    "ricker": RICKER,
}

# Burt-style binomial taps for the pyramid's blur and interpolation filters.
_BINOMIAL5 = (0.0625, 0.25, 0.375, 0.25, 0.0625)


def _check_same_shape(y: Tensor, y_hat: Tensor) -> None:
    if y.shape != y_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(y.shape)} vs {tuple(y_hat.shape)}")


def mse_loss(y: Tensor, y_hat: Tensor) -> Tensor:
    """Mean of squared differences over all elements."""
    _check_same_shape(y, y_hat)
    return ((y - y_hat) ** 2).mean()


def charbonnier_loss(y: Tensor, y_hat: Tensor, epsilon: float = 1e-3) -> Tensor:
    """Mean of sqrt(diff^2 + eps^2); a smooth L1/L2 hybrid, floor = eps."""
    _check_same_shape(y, y_hat)
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    return torch.sqrt((y - y_hat) ** 2 + epsilon * epsilon).mean()


def edge_loss(y: Tensor, y_hat: Tensor, kernel: str = "laplacian_k1") -> Tensor:
    """MSE between fixed 3x3 kernel responses (replicate same-padding)."""
    _check_same_shape(y, y_hat)
    if kernel not in EDGE_KERNELS:
        raise ConfigError(f"unknown edge kernel {kernel!r}")
    k = EDGE_KERNELS[kernel]
    return mse_loss(correlate2d(y, k), correlate2d(y_hat, k))


def sobel_loss(y: Tensor, y_hat: Tensor) -> Tensor:
    """Horizontal- and vertical-derivative MSEs, evaluated separately and summed."""
    _check_same_shape(y, y_hat)
    loss_h = mse_loss(correlate2d(y, SOBEL_H), correlate2d(y_hat, SOBEL_H))
    loss_v = mse_loss(correlate2d(y, SOBEL_V), correlate2d(y_hat, SOBEL_V))
    return loss_h + loss_v


def gradient_loss(y: Tensor, y_hat: Tensor) -> Tensor:
    """MSE between forward-difference gradients, summed over both axes."""
    _check_same_shape(y, y_hat)
    dx = lambda t: t[..., :, 1:] - t[..., :, :-1]
    dy = lambda t: t[..., 1:, :] - t[..., :-1, :]
    return mse_loss(dx(y), dx(y_hat)) + mse_loss(dy(y), dy(y_hat))


def _binomial_blur(x: Tensor) -> Tensor:
    taps = torch.tensor(_BINOMIAL5, dtype=x.dtype, device=x.device)
    b, c, h, w = x.shape
    flat = x.reshape(b * c, 1, h, w)
    flat = F.pad(flat, (0, 0, 2, 2), mode="replicate")
    flat = F.conv2d(flat, taps.view(1, 1, -1, 1))
    flat = F.pad(flat, (2, 2, 0, 0), mode="replicate")
    flat = F.conv2d(flat, taps.view(1, 1, 1, -1))
    return flat.reshape(b, c, h, w)


def pyramid_down(x: Tensor) -> Tensor:
    """Binomial blur then 2x decimation."""
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ShapeError(f"pyramid level needs even dims, got {tuple(x.shape[-2:])}")
    return _binomial_blur(x)[..., 0::2, 0::2]


def _interp_axis(x: Tensor, dim: int) -> Tensor:
    """Double one spatial axis with the binomial interpolation polyphases.

    Even outputs weight the neighbourhood (1, 6, 1)/8, odd outputs average
    the two flanking samples; borders replicate. Constants map to constants
    exactly, which keeps pyramid residuals of flat images at zero.
    """
    x = x.movedim(dim, -1)
    left = torch.cat([x[..., :1], x[..., :-1]], dim=-1)
    right = torch.cat([x[..., 1:], x[..., -1:]], dim=-1)
    even = (left + 6.0 * x + right) / 8.0
    odd = (x + right) / 2.0
    out = torch.stack([even, odd], dim=-1).flatten(-2)
    return out.movedim(-1, dim)


def pyramid_up(x: Tensor) -> Tensor:
    """2x interpolation matching pyramid_down's filter family."""
    return _interp_axis(_interp_axis(x, -2), -1)


def build_laplacian_pyramid(x: Tensor, levels: int) -> list[Tensor]:
    """Band-pass levels L_0..L_{n-1} plus the final low-pass residual G_n."""
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    h, w = x.shape[-2:]
    if h % (2**levels) or w % (2**levels):
        raise ShapeError(f"{h}x{w} not divisible by 2^{levels}")
    out = []
    current = x
    for _ in range(levels):
        down = pyramid_down(current)
        out.append(current - pyramid_up(down))
        current = down
    out.append(current)
    return out


def laplacian_pyramid_loss(y: Tensor, y_hat: Tensor, levels: int = 3) -> Tensor:
    """Sum of per-level MSEs between the two pyramids."""
    _check_same_shape(y, y_hat)
    pyr_y = build_laplacian_pyramid(y, levels)
    pyr_hat = build_laplacian_pyramid(y_hat, levels)
    total = y.new_zeros(())
    for a, b in zip(pyr_y, pyr_hat):
        total = total + mse_loss(a, b)
    return total


class FeatureExtractor(nn.Module):
    """Deterministic feature maps for perceptual distance.

    Any implementation must map (B, 3, H, W) to a fixed-shape feature tensor
    and give identical outputs for identical inputs. Weights may come from a
    checkpoint file or from a seeded random draw (the test fallback).
    """

    def features(self, frames: Tensor) -> Tensor:
        raise NotImplementedError


class ConvFeatureExtractor(FeatureExtractor):
    """Small frozen conv stack; pluggable stand-in for a pretrained trunk."""

    def __init__(self, channels: tuple[int, ...] = (16, 32, 32)):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = 3
        for i, out_ch in enumerate(channels):
            stride = 2 if i == 1 else 1
            layers.append(nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1))
            layers.append(nn.LeakyReLU(0.1))
            in_ch = out_ch
        self.net = nn.Sequential(*layers)
        self.channels = tuple(channels)
        for p in self.parameters():
            p.requires_grad_(False)

    @classmethod
    def seeded(cls, seed: int, channels: tuple[int, ...] = (16, 32, 32)) -> "ConvFeatureExtractor":
        torch.manual_seed(seed)
        return cls(channels)

    def features(self, frames: Tensor) -> Tensor:
        if frames.shape[1] != 3:
            raise ShapeError(f"extractor expects 3-channel frames, got {frames.shape[1]}")
        x = frames
        for layer in self.net:
            if isinstance(layer, nn.Conv2d):
                x = F.conv2d(
                    x,
                    layer.weight.to(x.dtype),
                    layer.bias.to(x.dtype),
                    stride=layer.stride,
                    padding=layer.padding,
                )
            else:
                x = layer(x)
        return x

    def save(self, path: str | Path) -> None:
        meta = {"kind": "feature_extractor", "channels": list(self.channels)}
        save_checkpoint(path, meta, dict(self.state_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "ConvFeatureExtractor":
        meta, tensors = load_checkpoint(path)
        if meta.get("kind") != "feature_extractor":
            raise ConfigError(f"{path} does not hold a feature extractor checkpoint")
        model = cls(tuple(meta["channels"]))
        model.load_state_dict({k: v.to(torch.float32) for k, v in tensors.items()})
        for p in model.parameters():
            p.requires_grad_(False)
        return model


def perceptual_loss(
    y: Tensor, y_hat: Tensor, extractor: FeatureExtractor, norm: str = "l2"
) -> Tensor:
    """Size-normalised distance between feature maps of the two inputs."""
    _check_same_shape(y, y_hat)
    if norm not in ("l1", "l2"):
        raise ConfigError(f"perceptual norm must be 'l1' or 'l2', got {norm!r}")
    feats_y = extractor.features(y)
    feats_hat = extractor.features(y_hat)
    diff = feats_y - feats_hat
    return diff.abs().mean() if norm == "l1" else (diff**2).mean()


def ssim(
    y: Tensor,
    y_hat: Tensor,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    max_val: float = 1.0,
) -> Tensor:
    """Mean local structural similarity over valid window positions."""
    _check_same_shape(y, y_hat)
    h, w = y.shape[-2:]
    if h < window_size or w < window_size:
        raise ShapeError(f"frames {h}x{w} smaller than ssim window {window_size}")
    window = gaussian_window_2d(window_size, sigma, dtype=y.dtype).to(y.device)
    channels = y.shape[1]
    weight = window.expand(channels, 1, window_size, window_size)
    conv = lambda t: F.conv2d(t, weight, groups=channels)
    mu_y = conv(y)
    mu_hat = conv(y_hat)
    var_y = conv(y * y) - mu_y**2
    var_hat = conv(y_hat * y_hat) - mu_hat**2
    cov = conv(y * y_hat) - mu_y * mu_hat
    c1 = (k1 * max_val) ** 2
    c2 = (k2 * max_val) ** 2
    ssim_map = ((2 * mu_y * mu_hat + c1) * (2 * cov + c2)) / (
        (mu_y**2 + mu_hat**2 + c1) * (var_y + var_hat + c2)
    )
    return ssim_map.mean()


def ssim_loss(y: Tensor, y_hat: Tensor, **kwargs) -> Tensor:
    return 1.0 - ssim(y, y_hat, **kwargs)


def psnr(y: Tensor, y_hat: Tensor, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for near-zero error."""
    _check_same_shape(y, y_hat)
    mse = ((y - y_hat) ** 2).mean().item()
    if mse < 1e-10:
        return 100.0
    return min(100.0, 10.0 * torch.log10(torch.tensor(max_val * max_val / mse)).item())


def adversarial_loss(
    logits_fake: Tensor, logits_real: Tensor | None, side: str
) -> Tensor:
    """Per-pixel binary cross-entropy objectives.

    side='discriminator': real pushed to 1 plus fake pushed to 0.
    side='generator': non-saturating fake-pushed-to-1 (logits_real unused).
    """
    if side == "generator":
        return F.binary_cross_entropy_with_logits(logits_fake, torch.ones_like(logits_fake))
    if side == "discriminator":
        if logits_real is None:
            raise ConfigError("discriminator side requires real logits")
        loss_real = F.binary_cross_entropy_with_logits(logits_real, torch.ones_like(logits_real))
        loss_fake = F.binary_cross_entropy_with_logits(logits_fake, torch.zeros_like(logits_fake))
        return loss_real + loss_fake
    raise ConfigError(f"side must be 'generator' or 'discriminator', got {side!r}")


def _default_weights() -> dict[str, float]:
    return {
        "mse": 1.0,
        "charbonnier": 0.0,
        "perceptual": 0.1,
        "ssim": 0.2,
        "sobel": 0.05,
        "laplacian": 0.05,
        "ricker": 0.02,
        "pyramid": 0.05,
        "gradient": 0.05,
        "adversarial": 0.005,
    }


@dataclass
class LossConfig:
    """Weighted selection of loss terms plus per-term settings."""

    weights: dict[str, float] = field(default_factory=_default_weights)
    charbonnier_epsilon: float = 1e-3
    pyramid_levels: int = 3
    perceptual_norm: str = "l2"
    laplacian_kernel: str = "laplacian_k1"

    def __post_init__(self) -> None:
        for name, value in self.weights.items():
            if name not in TERM_NAMES:
                raise ConfigError(f"unknown loss term {name!r}")
            if value < 0:
                raise ConfigError(f"weight for {name} must be >= 0")
        for name in TERM_NAMES:
            self.weights.setdefault(name, 0.0)
        if not any(v > 0 for v in self.weights.values()):
            raise ConfigError("at least one loss weight must be positive")
        if self.charbonnier_epsilon <= 0:
            raise ConfigError("charbonnier_epsilon must be positive")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if self.perceptual_norm not in ("l1", "l2"):
            raise ConfigError("perceptual_norm must be 'l1' or 'l2'")
        if self.laplacian_kernel not in ("laplacian_k1", "laplacian_k2"):
            raise ConfigError("laplacian_kernel must be 'laplacian_k1' or 'laplacian_k2'")

    def active_terms(self) -> list[str]:
        return [name for name in TERM_NAMES if self.weights[name] > 0]

    def with_weights(self, **overrides: float) -> "LossConfig":
        merged = {name: 0.0 for name in TERM_NAMES}
        merged.update(overrides)
        return replace(self, weights=merged)


@dataclass(frozen=True)
class LossBundle:
    """Per-term scalar values and the weighted total for one evaluation."""

    terms: dict[str, float]
    total: float

    def __post_init__(self) -> None:
        values = list(self.terms.values()) + [self.total]
        if not all(torch.isfinite(torch.tensor(v)) for v in values):
            raise ConfigError("loss bundle contains non-finite values")


def evaluate_terms(
    y: Tensor,
    y_hat: Tensor,
    config: LossConfig,
    extractor: FeatureExtractor | None = None,
    fake_logits: Tensor | None = None,
    only: tuple[str, ...] | None = None,
) -> dict[str, Tensor]:
    """Raw (gradient-carrying) values for the positively weighted terms.

    `only` restricts evaluation to a subset of term names (still gated on a
    positive weight).
    """
    out: dict[str, Tensor] = {}
    for name in config.active_terms():
        if only is not None and name not in only:
            continue
        if name == "mse":
            out[name] = mse_loss(y, y_hat)
        elif name == "charbonnier":
            out[name] = charbonnier_loss(y, y_hat, config.charbonnier_epsilon)
        elif name == "perceptual":
            if extractor is None:
                raise ConfigError("perceptual weight set but no feature extractor supplied")
            out[name] = perceptual_loss(y, y_hat, extractor, config.perceptual_norm)
        elif name == "ssim":
            out[name] = ssim_loss(y, y_hat)
        elif name == "sobel":
            out[name] = sobel_loss(y, y_hat)
        elif name == "laplacian":
            out[name] = edge_loss(y, y_hat, config.laplacian_kernel)
        elif name == "ricker":
            out[name] = edge_loss(y, y_hat, "ricker")
        elif name == "pyramid":
            out[name] = laplacian_pyramid_loss(y, y_hat, config.pyramid_levels)
        elif name == "gradient":
            out[name] = gradient_loss(y, y_hat)
        elif name == "adversarial":
            if fake_logits is None:
                raise ConfigError("adversarial weight set but no logits supplied")
            out[name] = adversarial_loss(fake_logits, None, "generator")
    return out


def total_loss(
    y: Tensor,
    y_hat: Tensor,
    config: LossConfig,
    extractor: FeatureExtractor | None = None,
    fake_logits: Tensor | None = None,
) -> LossBundle:
    """Evaluate every positively weighted term and fold the weighted total."""
    raw = evaluate_terms(y, y_hat, config, extractor, fake_logits)
    terms = {name: float(value.item()) for name, value in raw.items()}
    total = sum(config.weights[name] * value for name, value in terms.items())
    return LossBundle(terms=terms, total=float(total))
