"""Frame sequences, cropping, patch grids, and augmentation.

Walks the core data plumbing: a clip is split into an exact grid of patch
sequences, reassembled bit-exactly, and augmented with quarter-turn
rotations and flips that permute pixels without changing their values.
"""

import torch

from vsrlab.seqcore import (
    AugmentationSpec,
    augment,
    crop_fixed,
    downsample,
    is_too_dark,
    reassemble,
    split_into_grid,
)

from _common import make_clip

clip = make_clip(seed=1, n=4, h=128, w=128)
print(f"clip: {clip.n_frames} frames of {clip.height}x{clip.width}")

crop = crop_fixed(clip, 64, (32, 16))
print(f"crop at (32, 16): {crop.height}x{crop.width}")

grid = split_into_grid(crop, 16)
print(f"split into {grid.grid_rows}x{grid.grid_cols} grid of {grid.patch_size}px patches")

back = reassemble(grid)
print(f"reassembly bit-exact: {torch.equal(back.frames, crop.frames)}")

lr = downsample(crop, 2, "bicubic")
print(f"bicubic 2x downsample: {crop.height}x{crop.width} -> {lr.height}x{lr.width}")

spec = AugmentationSpec.sample(seed=7)
augmented = augment(crop, spec)
same_values = torch.equal(
    augmented.frames.flatten().sort().values, crop.frames.flatten().sort().values
)
print(
    f"augmentation draw: rotation={spec.rotation_quarter_turns * 90} deg, "
    f"vflip={spec.flip_vertical}, hflip={spec.flip_horizontal}; "
    f"pixel multiset preserved: {same_values}"
)

print(f"dark filter on this crop (threshold 0.05): {is_too_dark(crop, 0.05)}")
dark = crop.with_frames(crop.frames * 0.01)
print(f"dark filter on a 100x dimmed copy: {is_too_dark(dark, 0.05)}")
