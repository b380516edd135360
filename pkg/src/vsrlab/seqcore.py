"""Frame-sequence and patch-grid data types plus the spatial pipeline ops.

A FrameSequence is an ordered run of same-sized RGB frames with values in
[0, 1], stored as a (N, 3, H, W) float tensor. Everything here is a pure
function: inputs are never mutated and outputs are validated back into the
[0, 1] contract.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ConfigError, ConsistencyError, ShapeError

_FRAME_NAME = re.compile(r"^frame_(\d{6,})\.(png|bmp)$")

# Decimation taps for integer-factor downsampling. Output pixel centres land
# exactly halfway between two source pixels, so a single set of half-offset
# weights covers every output position. Cubic weights use a = -0.75.
_CUBIC_TAPS = (-0.09375, 0.59375, 0.59375, -0.09375)
_LINEAR_TAPS_X2 = (0.5, 0.5)
_LINEAR_TAPS_X4 = (0.0, 0.5, 0.5, 0.0)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """An ordered run of N same-sized RGB frames, values in [0, 1].

    frames: (N, 3, H, W) float tensor.
    frame_rate_hint: optional positive frames-per-second, informational only.
    """

    frames: torch.Tensor
    frame_rate_hint: float | None = None

    def __post_init__(self) -> None:
        f = self.frames
        if not isinstance(f, torch.Tensor) or f.dim() != 4:
            raise ShapeError("frames must be a (N, 3, H, W) tensor")
        n, c, h, w = f.shape
        if c != 3:
            raise ShapeError(f"expected 3 channels, got {c}")
        if n < 1 or h < 1 or w < 1:
            raise ShapeError(f"degenerate sequence shape {tuple(f.shape)}")
        if not f.dtype.is_floating_point:
            raise ShapeError(f"frames must be floating point, got {f.dtype}")
        if not torch.isfinite(f).all():
            raise ShapeError("frames contain non-finite values")
        if f.min().item() < 0.0 or f.max().item() > 1.0:
            raise ShapeError("frame values must lie in [0, 1]")
        if self.frame_rate_hint is not None and self.frame_rate_hint <= 0:
            raise ConfigError("frame_rate_hint must be positive")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[2]

    @property
    def width(self) -> int:
        return self.frames.shape[3]

    def with_frames(self, frames: torch.Tensor) -> "FrameSequence":
        return FrameSequence(frames, self.frame_rate_hint)

    def window(self, start: int, length: int) -> "FrameSequence":
        """Contiguous temporal slice of `length` frames starting at `start`."""
        if start < 0 or start + length > self.n_frames:
            raise ShapeError(
                f"window [{start}, {start + length}) outside 0..{self.n_frames}"
            )
        return self.with_frames(self.frames[start : start + length])


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """A FrameSequence split into an exact R x C tiling of square patches."""

    patches: tuple[tuple[int, int, FrameSequence], ...]
    grid_rows: int
    grid_cols: int
    patch_size: int
    source_shape: tuple[int, int]

    def __post_init__(self) -> None:
        h, w = self.source_shape
        if self.grid_rows * self.patch_size != h or self.grid_cols * self.patch_size != w:
            raise ConsistencyError(
                f"grid {self.grid_rows}x{self.grid_cols} of {self.patch_size}px "
                f"patches does not tile source {h}x{w}"
            )
        positions = [(r, c) for r, c, _ in self.patches]
        if len(positions) != self.grid_rows * self.grid_cols:
            raise ConsistencyError(
                f"expected {self.grid_rows * self.grid_cols} patches, got {len(positions)}"
            )
        if len(set(positions)) != len(positions):
            raise ConsistencyError("duplicate grid positions")
        for r, c, seq in self.patches:
            if not (0 <= r < self.grid_rows and 0 <= c < self.grid_cols):
                raise ConsistencyError(f"position ({r}, {c}) outside grid")
            if seq.height != self.patch_size or seq.width != self.patch_size:
                raise ConsistencyError(f"patch at ({r}, {c}) is not {self.patch_size}px square")


@dataclass(frozen=True)
class AugmentationSpec:
    """One concrete augmentation draw: quarter-turn rotation plus two flips."""

    rotation_quarter_turns: int = 0
    flip_vertical: bool = False
    flip_horizontal: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rotation_quarter_turns not in (0, 1, 2, 3):
            raise ConfigError("rotation_quarter_turns must be in {0, 1, 2, 3}")

    @classmethod
    def sample(cls, seed: int) -> "AugmentationSpec":
        """Draw rotation uniformly from quarter turns and each flip at p=0.5."""
        rng = np.random.default_rng(seed)
        return cls(
            rotation_quarter_turns=int(rng.integers(0, 4)),
            flip_vertical=bool(rng.random() < 0.5),
            flip_horizontal=bool(rng.random() < 0.5),
            seed=seed,
        )


def crop_fixed(seq: FrameSequence, size: int, origin: tuple[int, int]) -> FrameSequence:
    """Cut the same `size` x `size` window out of every frame.

    origin is (top, left); the window must lie fully inside the frame.
    """
    if size < 1:
        raise ConfigError(f"crop size must be >= 1, got {size}")
    top, left = origin
    if top < 0 or left < 0 or top + size > seq.height or left + size > seq.width:
        raise ShapeError(
            f"crop origin {origin} size {size} outside {seq.height}x{seq.width}"
        )
    return seq.with_frames(seq.frames[:, :, top : top + size, left : left + size].clone())


def split_tensor_grid(frames: torch.Tensor, patch_size: int) -> dict[tuple[int, int], torch.Tensor]:
    """Tensor-level exact tiling used by both seqcore and the trainer."""
    h, w = frames.shape[-2:]
    if patch_size < 1:
        raise ConfigError(f"patch_size must be >= 1, got {patch_size}")
    if h % patch_size or w % patch_size:
        raise ShapeError(f"{h}x{w} not divisible by patch size {patch_size}")
    out = {}
    for r in range(h // patch_size):
        for c in range(w // patch_size):
            out[(r, c)] = frames[
                ..., r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size
            ]
    return out


def reassemble_tensor_grid(
    patches: dict[tuple[int, int], torch.Tensor], rows: int, cols: int
) -> torch.Tensor:
    """Inverse of split_tensor_grid; patches stitched back in (row, col) order."""
    row_strips = []
    for r in range(rows):
        row_strips.append(torch.cat([patches[(r, c)] for c in range(cols)], dim=-1))
    return torch.cat(row_strips, dim=-2)


def split_into_grid(seq: FrameSequence, patch_size: int) -> PatchGrid:
    """Split into a PatchGrid of square patch-sequences; exact tiling only."""
    tiles = split_tensor_grid(seq.frames, patch_size)
    rows = seq.height // patch_size
    cols = seq.width // patch_size
    patches = tuple(
        (r, c, seq.with_frames(tiles[(r, c)].clone())) for r in range(rows) for c in range(cols)
    )
    return PatchGrid(
        patches=patches,
        grid_rows=rows,
        grid_cols=cols,
        patch_size=patch_size,
        source_shape=(seq.height, seq.width),
    )


def reassemble(grid: PatchGrid) -> FrameSequence:
    """Bit-exact inverse of split_into_grid."""
    lengths = {seq.n_frames for _, _, seq in grid.patches}
    if len(lengths) != 1:
        raise ConsistencyError("patches disagree on temporal length")
    tiles = {(r, c): seq.frames for r, c, seq in grid.patches}
    frames = reassemble_tensor_grid(tiles, grid.grid_rows, grid.grid_cols)
    hint = grid.patches[0][2].frame_rate_hint
    return FrameSequence(frames, hint)


def _decimate(frames: torch.Tensor, taps: Sequence[float], factor: int, pad: int) -> torch.Tensor:
    """Separable decimation: filter+stride along H then W, replicate borders."""
    n, c, h, w = frames.shape
    x = frames.reshape(n * c, 1, h, w)
    k = torch.tensor(taps, dtype=frames.dtype, device=frames.device)
    kh = k.view(1, 1, -1, 1)
    kw = k.view(1, 1, 1, -1)
    if pad:
        x = F.pad(x, (0, 0, pad, pad), mode="replicate")
    x = F.conv2d(x, kh, stride=(factor, 1))
    if pad:
        x = F.pad(x, (pad, pad, 0, 0), mode="replicate")
    x = F.conv2d(x, kw, stride=(1, factor))
    return x.reshape(n, c, h // factor, w // factor)


def downsample(seq: FrameSequence, factor: int, method: str = "bicubic") -> FrameSequence:
    """Integer-factor downsampling with a fixed interpolation kernel.

    factor must be 2 or 4 and divide both H and W. `bicubic` uses the 4-tap
    a=-0.75 kernel, `bilinear` the 2-tap average; both evaluated at the
    half-pixel offsets of aligned decimation, replicate padding at borders.
    """
    if factor not in (2, 4):
        raise ConfigError(f"unsupported downsample factor {factor}")
    if method not in ("bicubic", "bilinear"):
        raise ConfigError(f"unknown downsample method {method!r}")
    if seq.height % factor or seq.width % factor:
        raise ShapeError(f"{seq.height}x{seq.width} not divisible by factor {factor}")
    if method == "bicubic":
        taps, pad = _CUBIC_TAPS, (1 if factor == 2 else 0)
    elif factor == 2:
        taps, pad = _LINEAR_TAPS_X2, 0
    else:
        taps, pad = _LINEAR_TAPS_X4, 0
    out = _decimate(seq.frames, taps, factor, pad)
    return seq.with_frames(out.clamp(0.0, 1.0))


def upsample(seq: FrameSequence, factor: int, method: str = "bicubic") -> FrameSequence:
    """Plain interpolation upsampling (the non-learned baseline)."""
    if factor not in (2, 4):
        raise ConfigError(f"unsupported upsample factor {factor}")
    if method not in ("bicubic", "bilinear"):
        raise ConfigError(f"unknown upsample method {method!r}")
    out = F.interpolate(seq.frames, scale_factor=factor, mode=method, align_corners=False)
    return seq.with_frames(out.clamp(0.0, 1.0))


def is_too_dark(
    seq: FrameSequence,
    threshold: float,
    check_borders: bool = False,
    border_width: int = 4,
) -> bool:
    """True iff the mean over all RGB values of all frames is below threshold.

    With check_borders, a sequence also counts as dark when any single
    border strip falls below the threshold (catches sharp dark-to-normal
    transitions at frame edges). Strictly-less-than at the boundary.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    if seq.frames.mean().item() < threshold:
        return True
    if check_borders:
        b = min(border_width, seq.height, seq.width)
        f = seq.frames
        strips = (f[:, :, :b, :], f[:, :, -b:, :], f[:, :, :, :b], f[:, :, :, -b:])
        return any(s.mean().item() < threshold for s in strips)
    return False


def augment(seq: FrameSequence, spec: AugmentationSpec) -> FrameSequence:
    """Apply rotation then vertical flip then horizontal flip to every frame.

    Pure pixel permutation; an odd quarter-turn count requires square frames.
    """
    if spec.rotation_quarter_turns % 2 == 1 and seq.height != seq.width:
        raise ShapeError("odd quarter-turn rotation requires square frames")
    frames = seq.frames
    if spec.rotation_quarter_turns:
        frames = torch.rot90(frames, spec.rotation_quarter_turns, dims=(-2, -1))
    if spec.flip_vertical:
        frames = torch.flip(frames, dims=(-2,))
    if spec.flip_horizontal:
        frames = torch.flip(frames, dims=(-1,))
    return seq.with_frames(frames.contiguous())


def load_clip(clip_dir: str | Path, frame_rate_hint: float | None = None) -> FrameSequence:
    """Load a clip directory of zero-padded frame_NNNNNN.png images.

    8-bit RGB rasters are mapped to [0, 1] by division by 255.
    """
    clip_dir = Path(clip_dir)
    if not clip_dir.is_dir():
        raise FileNotFoundError(f"clip directory not found: {clip_dir}")
    entries = []
    for p in clip_dir.iterdir():
        m = _FRAME_NAME.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    if not entries:
        raise FileNotFoundError(f"no frame_NNNNNN images in {clip_dir}")
    entries.sort()
    frames = []
    for _, path in entries:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        frames.append(torch.from_numpy(arr).permute(2, 0, 1))
    return FrameSequence(torch.stack(frames), frame_rate_hint)


def save_clip(seq: FrameSequence, clip_dir: str | Path) -> list[Path]:
    """Write frames as frame_000001.png upward; returns the written paths."""
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    written = []
    arr = (seq.frames.clamp(0, 1) * 255.0).round().to(torch.uint8)
    for i in range(seq.n_frames):
        img = Image.fromarray(arr[i].permute(1, 2, 0).numpy(), mode="RGB")
        path = clip_dir / f"frame_{i + 1:06d}.png"
        img.save(path)
        written.append(path)
    return written


def derive_seed(*parts) -> int:
    """Stable 63-bit seed derived from arbitrary labelled parts.

    Deterministic across processes and platforms; used to hand each clip,
    epoch or operator its own reproducible RNG stream.
    """
    import hashlib

    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)
