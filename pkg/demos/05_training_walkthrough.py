"""The patch-grid training schedule, shortened to a coffee-break run.

One 64x64 crop drives the full per-image schedule: a 2x pass over 16px
patches, a leaf pass at 32px, and the cascaded 4x pass, all pooled into a
single clipped update per network. Forty updates are enough to watch the
loss move and the model pull ahead of plain interpolation.
"""

import time

import torch

from vsrlab.disc import DiscriminatorSpec
from vsrlab.gen import GeneratorSpec
from vsrlab.loss import LossConfig, psnr
from vsrlab.seqcore import downsample, upsample
from vsrlab.trainer import TrainConfig, TrainState, process_crop

from _common import make_clip

clip = make_clip(seed=42, n=8, h=64, w=64)
config = TrainConfig(crop_size=64, seq_len=8, seed=0, learning_rate=3e-3)
state = TrainState.create(
    GeneratorSpec("residual_based", 16, 2, (2,), "dot_product"),
    DiscriminatorSpec(base_channels=8, depth=2),
    config,
    LossConfig(weights={"mse": 1.0, "sobel": 0.05}),
)

lr_clip = downsample(clip, 2, "bicubic")
bilinear_db = psnr(clip.frames, upsample(lr_clip, 2, "bilinear").frames)
bicubic_db = psnr(clip.frames, upsample(lr_clip, 2, "bicubic").frames)
print(f"baselines: bilinear {bilinear_db:.2f} dB, bicubic {bicubic_db:.2f} dB")

started = time.time()
for step in range(40):
    bundle = process_crop(clip, state, config)
    if step % 10 == 0 or step == 39:
        with torch.no_grad():
            prediction = state.generator(lr_clip.frames)
        print(
            f"update {step:3d}: total={bundle.total:.5f} "
            f"mse={bundle.terms['mse']:.5f} psnr={psnr(clip.frames, prediction):.2f} dB"
        )
print(
    f"\n{state.counters['gen_updates']} generator updates "
    f"({state.counters['gen_calls']} generator calls, "
    f"{state.counters['patch_losses']} patch losses) in {time.time() - started:.0f}s"
)
print("per-image schedule on a 64x64 crop: 4 patches at 2x + 1 leaf patch + 1 cascaded 4x patch")
