"""The loss family and its closed-form check points.

Every distance-style term sits at its documented floor for identical
inputs; ramps and constants have analytic kernel responses; psnr and ssim
reproduce textbook values.
"""

import torch

from vsrlab.kernels import RICKER, SOBEL_H, correlate2d
from vsrlab.loss import (
    ConvFeatureExtractor,
    LossConfig,
    charbonnier_loss,
    gradient_loss,
    laplacian_pyramid_loss,
    mse_loss,
    psnr,
    sobel_loss,
    ssim,
    total_loss,
)

from _common import make_clip

clip = make_clip(seed=4, n=2, h=32, w=32)
y = clip.frames
noisy = (y + 0.05 * torch.randn_like(y)).clamp(0, 1)

print("floors at y == y_hat:")
print(f"  mse         {mse_loss(y, y).item():.3e}")
print(f"  charbonnier {charbonnier_loss(y, y, 1e-3).item():.3e}  (floor = epsilon)")
print(f"  sobel       {sobel_loss(y, y).item():.3e}")
print(f"  pyramid     {laplacian_pyramid_loss(y, y, 2).item():.3e}")
print(f"  gradient    {gradient_loss(y, y).item():.3e}")

print("\nagainst a noisy copy:")
print(f"  mse  {mse_loss(y, noisy).item():.5f}")
print(f"  psnr {psnr(y, noisy):.2f} dB")
print(f"  ssim {ssim(y, noisy).item():.4f}")

d = 0.015625
ramp = (torch.arange(8, dtype=torch.float64) * d).expand(8, 8).reshape(1, 1, 8, 8).contiguous()
response = correlate2d(ramp, SOBEL_H)[0, 0, 1:-1, 1:-1]
print(f"\nhorizontal ramp, step {d}: interior sobel-H response = {response[0, 0].item():.6f} (= 8d)")

kernel_sum = RICKER.sum().item()
print(f"ricker kernel entry sum: {kernel_sum:.4f}")

mse_001 = psnr(torch.zeros(1, 3, 8, 8, dtype=torch.float64), torch.full((1, 3, 8, 8), 0.1, dtype=torch.float64))
print(f"psnr at mse 0.01: {mse_001:.6f} dB")

config = LossConfig()  # default profile: weighted mix of all families
extractor = ConvFeatureExtractor.seeded(0)
bundle = total_loss(y, noisy, config.with_weights(mse=1.0, ssim=0.2, sobel=0.05, perceptual=0.1), extractor)
print("\nweighted bundle against the noisy copy:")
for name, value in bundle.terms.items():
    print(f"  {name:10s} {value:.5f}")
print(f"  total      {bundle.total:.5f}")
