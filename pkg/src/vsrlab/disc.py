"""U-Net encoder-decoder discriminator with per-pixel real/fake logits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ShapeError
from .gen import leaky_relu


@dataclass(frozen=True)
class DiscriminatorSpec:
    base_channels: int = 32
    depth: int = 3

    def __post_init__(self) -> None:
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")

    def to_json(self) -> dict:
        return {"base_channels": self.base_channels, "depth": self.depth}

    @classmethod
    def from_json(cls, data: dict) -> "DiscriminatorSpec":
        return cls(int(data["base_channels"]), int(data["depth"]))


class UNetDiscriminator(nn.Module):
    """Per-pixel logit map over frames treated independently.

    Each encoder level halves the spatial dims and doubles the channels;
    the decoder mirrors the encoder and concatenates the skip feature at
    every resolution. No normalisation layers; LReLU(0.1) throughout.
    Output is an unbounded (B, 1, H, W) logit map.
    """

    def __init__(self, spec: DiscriminatorSpec = DiscriminatorSpec()):
        super().__init__()
        self.spec = spec
        b = spec.base_channels
        self.stem = nn.Conv2d(3, b, 3, padding=1, padding_mode="replicate")
        self.encoders = nn.ModuleList(
            [nn.Conv2d(b * 2**i, b * 2 ** (i + 1), 4, stride=2, padding=1) for i in range(spec.depth)]
        )
        self.decoders = nn.ModuleList(
            [
                nn.Conv2d(b * 2 ** (i + 1) + b * 2**i, b * 2**i, 3, padding=1, padding_mode="replicate")
                for i in reversed(range(spec.depth))
            ]
        )
        self.head = nn.Conv2d(b, 1, 3, padding=1, padding_mode="replicate")

    def forward(self, frame_batch: Tensor) -> Tensor:
        if frame_batch.dim() != 4 or frame_batch.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W), got {tuple(frame_batch.shape)}")
        h, w = frame_batch.shape[-2:]
        stride = 2**self.spec.depth
        if h % stride or w % stride:
            raise ShapeError(f"{h}x{w} not divisible by 2^depth = {stride}")
        x = leaky_relu(self.stem(frame_batch))
        skips = [x]
        for enc in self.encoders:
            x = leaky_relu(enc(x))
            skips.append(x)
        for level, dec in zip(reversed(range(self.spec.depth)), self.decoders):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = leaky_relu(dec(torch.cat([x, skips[level]], dim=1)))
        return self.head(x)


def save_discriminator(model: UNetDiscriminator, path: str | Path, dtype: str = "float32") -> None:
    meta = {"kind": "discriminator", "spec": model.spec.to_json()}
    save_checkpoint(path, meta, dict(model.state_dict()), dtype=dtype)


def load_discriminator(path: str | Path) -> UNetDiscriminator:
    meta, tensors = load_checkpoint(path)
    if meta.get("kind") != "discriminator":
        raise ConfigError(f"{path} does not hold a discriminator checkpoint")
    model = UNetDiscriminator(DiscriminatorSpec.from_json(meta["spec"]))
    model.load_state_dict({k: v.to(torch.float32) for k, v in tensors.items()})
    return model
