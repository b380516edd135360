"""Generator building blocks and the two model variants.

All convolutions are 2D and applied per frame with shared weights; the only
cross-frame mixing happens inside the 3D non-local blocks, which attend over
every (frame, row, col) position of the sequence at once. That confinement is
what lets one set of weights accept any sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ShapeError
from .seqcore import FrameSequence

PAIRWISE_KINDS = ("gaussian", "embedded_gaussian", "dot_product", "concatenation")
VARIANTS = ("rrdb_based", "residual_based")

NEGATIVE_SLOPE = 0.1


def leaky_relu(x: Tensor) -> Tensor:
    """max(0.1 * x, x), elementwise."""
    return F.leaky_relu(x, NEGATIVE_SLOPE)


def conv_lrelu(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-size convolution (replicate padding) followed by the leaky ReLU.

    x: (B, C_in, H, W); weight: (C_out, C_in, k, k) with odd k.
    """
    if weight.dim() != 4 or weight.shape[2] != weight.shape[3] or weight.shape[2] % 2 == 0:
        raise ShapeError(f"weight must be (out, in, k, k) with odd k, got {tuple(weight.shape)}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"channel mismatch: input {x.shape[1]} vs weight {weight.shape[1]}")
    half = weight.shape[2] // 2
    padded = F.pad(x, (half, half, half, half), mode="replicate") if half else x
    return leaky_relu(F.conv2d(padded, weight, bias))


def _conv(in_ch: int, out_ch: int, kernel: int = 3) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, padding=kernel // 2, padding_mode="replicate")


class ResidualBlock(nn.Module):
    """Concatenation-style residual block.

    Five 3x3 conv+LReLU stages, each consuming the concat of the input and
    all previous stage outputs, closed by a 1x1 conv+LReLU back to the input
    width. Output is (1/3) * chain + (2/3) * input.
    """

    def __init__(self, channels: int):
        super().__init__()
        if channels % 2:
            raise ConfigError(f"channels must be even, got {channels}")
        growth = channels // 2
        self.stages = nn.ModuleList(
            [_conv(channels + i * growth, growth) for i in range(5)]
        )
        self.squeeze = nn.Conv2d(channels + 5 * growth, channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        feats = [x]
        for stage in self.stages:
            feats.append(leaky_relu(stage(torch.cat(feats, dim=1))))
        chain = leaky_relu(self.squeeze(torch.cat(feats, dim=1)))
        return chain / 3.0 + x * (2.0 / 3.0)


class RRDB(nn.Module):
    """Three chained residual blocks with an outer additive skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.blocks = nn.ModuleList([ResidualBlock(channels) for _ in range(3)])

    def forward(self, x: Tensor) -> Tensor:
        out = x
        for block in self.blocks:
            out = block(out)
        return out + x


@dataclass(frozen=True)
class NonLocalSpec:
    """Hyperparameters of one non-local block."""

    channels: int
    bottleneck: int | None = None  # defaults to channels // 2
    pairwise: str = "dot_product"

    def __post_init__(self) -> None:
        if self.pairwise not in PAIRWISE_KINDS:
            raise ConfigError(f"unknown pairwise kind {self.pairwise!r}")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        b = self.bottleneck
        if b is not None and b < 1:
            raise ConfigError("bottleneck must be >= 1")

    @property
    def bottleneck_channels(self) -> int:
        return self.bottleneck if self.bottleneck is not None else max(1, self.channels // 2)


class NonLocalBlock3D(nn.Module):
    """Attention over all (frame, row, col) positions of a sequence.

    Input (T, C, H, W) is treated as one set of P = T*H*W feature vectors.
    Each output position is a normalised, pairwise-weighted sum of unary
    features over all positions, projected back to C channels and added to
    the input. The output projection is zero-initialised, so a fresh block
    is the identity.

    Normalisation: softmax over positions for the exponential pairwise
    functions; division by P for dot_product and concatenation.
    """

    def __init__(self, spec: NonLocalSpec, chunk_size: int = 2048):
        super().__init__()
        self.spec = spec
        self.chunk_size = chunk_size
        b = spec.bottleneck_channels
        c = spec.channels
        self.theta = nn.Conv2d(c, b, 1)
        self.phi = nn.Conv2d(c, b, 1)
        self.g = nn.Conv2d(c, b, 1)
        self.w_z = nn.Conv2d(b, c, 1)
        nn.init.zeros_(self.w_z.weight)
        nn.init.zeros_(self.w_z.bias)
        if spec.pairwise == "concatenation":
            self.w_f = nn.Parameter(torch.empty(2 * b))
            nn.init.normal_(self.w_f, std=0.05)

    def _pairwise_rows(self, q_chunk: Tensor, keys: Tensor, values: Tensor, positions: int) -> Tensor:
        """Rows of y for one chunk of query positions.

        q_chunk: (m, B); keys: (B, P); values: (P, B). Returns (m, B).
        """
        kind = self.spec.pairwise
        if kind in ("gaussian", "embedded_gaussian"):
            scores = q_chunk @ keys
            return torch.softmax(scores, dim=1) @ values
        # concatenation: relu(w_f . [theta_i ; phi_j]), divided by P
        b = self.spec.bottleneck_channels
        a = q_chunk @ self.w_f[:b]
        bb = self.w_f[b:] @ keys
        scores = F.relu(a.unsqueeze(1) + bb.unsqueeze(0))
        return (scores @ values) / positions

    def forward(self, x: Tensor) -> Tensor:
        if x.dim() != 4:
            raise ShapeError(f"expected (T, C, H, W), got {tuple(x.shape)}")
        t, c, h, w = x.shape
        if c != self.spec.channels:
            raise ShapeError(f"channel mismatch: {c} vs spec {self.spec.channels}")
        p = t * h * w
        flat = lambda m: m.permute(1, 0, 2, 3).reshape(m.shape[1], p)  # (C', P)
        values = flat(self.g(x)).transpose(0, 1)  # (P, b)
        if self.spec.pairwise == "gaussian":
            queries = flat(x).transpose(0, 1)  # (P, C)
            keys = flat(x)  # (C, P)
        else:
            queries = flat(self.theta(x)).transpose(0, 1)  # (P, b)
            keys = flat(self.phi(x))  # (b, P)
        if self.spec.pairwise == "dot_product":
            # (theta phi^T) g == theta (phi^T g): the affinity matrix never
            # needs materialising, so this form is O(P b^2) instead of O(P^2 b)
            y = (queries @ (keys @ values)) / p
        else:
            rows = []
            for start in range(0, p, self.chunk_size):
                rows.append(
                    self._pairwise_rows(queries[start : start + self.chunk_size], keys, values, p)
                )
            y = torch.cat(rows, dim=0)  # (P, b)
        y = y.transpose(0, 1).reshape(-1, t, h, w).permute(1, 0, 2, 3)
        return self.w_z(y) + x


def depth_to_space(x: Tensor, factor: int = 2) -> Tensor:
    """Rearrange channel blocks of size factor^2 into spatial positions.

    Channel c*factor^2 + i*factor + j of the input lands at spatial offset
    (i, j) inside each upscaled cell of output channel c.
    """
    if x.shape[1] % (factor * factor):
        raise ConfigError(
            f"channels {x.shape[1]} not divisible by {factor * factor} for depth-to-space"
        )
    return F.pixel_shuffle(x, factor)


class SubPixelUpsampler(nn.Module):
    """Conv to 4x channels then depth-to-space: doubles H and W."""

    def __init__(self, channels: int):
        super().__init__()
        self.expand = _conv(channels, 4 * channels)

    def forward(self, x: Tensor) -> Tensor:
        return leaky_relu(depth_to_space(self.expand(x), 2))


@dataclass(frozen=True)
class GeneratorSpec:
    """Architecture hyperparameters for one generator.

    nonlocal_positions are 1-based block indices; a non-local block is
    inserted after each listed feature block (0 places one right after the
    channel-expansion stem).
    """

    variant: str = "rrdb_based"
    base_channels: int = 64
    num_blocks: int = 8
    nonlocal_positions: tuple[int, ...] = (4, 8)
    pairwise: str = "dot_product"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown generator variant {self.variant!r}")
        if self.pairwise not in PAIRWISE_KINDS:
            raise ConfigError(f"unknown pairwise kind {self.pairwise!r}")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ConfigError("base_channels must be even and >= 2")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        for pos in self.nonlocal_positions:
            if not 0 <= pos <= self.num_blocks:
                raise ConfigError(f"nonlocal position {pos} outside 0..{self.num_blocks}")

    @classmethod
    def default(cls, variant: str) -> "GeneratorSpec":
        if variant == "rrdb_based":
            return cls("rrdb_based", 64, 8, (4, 8), "dot_product")
        if variant == "residual_based":
            return cls("residual_based", 48, 6, (6,), "dot_product")
        raise ConfigError(f"unknown generator variant {variant!r}")

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "base_channels": self.base_channels,
            "num_blocks": self.num_blocks,
            "nonlocal_positions": list(self.nonlocal_positions),
            "pairwise": self.pairwise,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GeneratorSpec":
        return cls(
            variant=data["variant"],
            base_channels=int(data["base_channels"]),
            num_blocks=int(data["num_blocks"]),
            nonlocal_positions=tuple(int(p) for p in data["nonlocal_positions"]),
            pairwise=data["pairwise"],
        )


class Generator(nn.Module):
    """Sequence-to-sequence 2x upscaler.

    Four stages: channel expansion + temporal feature extraction (stem conv
    plus any position-0 non-local block), spatial feature extraction (the
    block stack with interleaved non-local blocks), reconstruction (3x3 conv
    with a trunk skip), and sub-pixel upsampling + compression back to RGB.
    The RGB head is zero-initialised and added to a bilinear-upsampled copy
    of the input, so an untrained model reproduces the plain interpolation
    baseline; output is clamped to [0, 1].
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        ch = spec.base_channels
        block_cls = RRDB if spec.variant == "rrdb_based" else ResidualBlock
        self.stem = _conv(3, ch)
        self.stem_nonlocal = self._maybe_nonlocal(0)
        self.blocks = nn.ModuleList([block_cls(ch) for _ in range(spec.num_blocks)])
        self.block_nonlocals = nn.ModuleDict(
            {
                str(pos): NonLocalBlock3D(NonLocalSpec(ch, pairwise=spec.pairwise))
                for pos in spec.nonlocal_positions
                if pos > 0
            }
        )
        self.reconstruct = _conv(ch, ch)
        self.upsampler = SubPixelUpsampler(ch)
        self.to_rgb = _conv(ch, 3)
        nn.init.zeros_(self.to_rgb.weight)
        nn.init.zeros_(self.to_rgb.bias)

    def _maybe_nonlocal(self, pos: int) -> NonLocalBlock3D | None:
        if pos in self.spec.nonlocal_positions:
            return NonLocalBlock3D(NonLocalSpec(self.spec.base_channels, pairwise=self.spec.pairwise))
        return None

    def forward(self, frames: Tensor) -> Tensor:
        """frames: (T, 3, H, W) in [0, 1] -> (T, 3, 2H, 2W) in [0, 1]."""
        if frames.dim() != 4 or frames.shape[1] != 3:
            raise ShapeError(f"expected (T, 3, H, W), got {tuple(frames.shape)}")
        feat = leaky_relu(self.stem(frames))
        if self.stem_nonlocal is not None:
            feat = self.stem_nonlocal(feat)
        body = feat
        for idx, block in enumerate(self.blocks, start=1):
            body = block(body)
            if str(idx) in self.block_nonlocals:
                body = self.block_nonlocals[str(idx)](body)
        trunk = leaky_relu(self.reconstruct(body)) + feat
        up = self.upsampler(trunk)
        residual = self.to_rgb(up)
        base = F.interpolate(frames, scale_factor=2, mode="bilinear", align_corners=False)
        return (base + residual).clamp(0.0, 1.0)


def build_generator(spec: GeneratorSpec, seed: int | None = None) -> Generator:
    """Construct a generator, optionally with deterministic initialisation."""
    if seed is not None:
        torch.manual_seed(seed)
    return Generator(spec)


def generator_forward(seq: FrameSequence, model: Generator) -> FrameSequence:
    """Run the generator on a FrameSequence and rewrap the result."""
    with torch.no_grad():
        out = model(seq.frames)
    return seq.with_frames(out)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def save_generator(model: Generator, path: str | Path, extra: dict | None = None, dtype: str = "float32") -> None:
    meta = {"kind": "generator", "spec": model.spec.to_json()}
    if extra:
        meta["extra"] = extra
    save_checkpoint(path, meta, dict(model.state_dict()), dtype=dtype)


def load_generator(path: str | Path) -> Generator:
    meta, tensors = load_checkpoint(path)
    if meta.get("kind") != "generator":
        raise ConfigError(f"{path} does not hold a generator checkpoint")
    spec = GeneratorSpec.from_json(meta["spec"])
    model = Generator(spec)
    model.load_state_dict({k: v.to(torch.float32) for k, v in tensors.items()})
    return model
