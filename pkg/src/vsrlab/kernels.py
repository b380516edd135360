"""Fixed 3x3 edge-response kernels and Gaussian kernel construction.

Shared by the degradation operators (gradient maps for content-aware blur)
and the edge-aware loss terms.
"""

from __future__ import annotations

import math

import torch

# Laplacian over the 4-neighbourhood (orthogonal neighbours only).
LAPLACIAN_K1 = torch.tensor(
    [[0.0, -1.0, 0.0],
     [-1.0, 4.0, -1.0],
     [0.0, -1.0, 0.0]]
)

# Laplacian over the full 8-neighbourhood.
LAPLACIAN_K2 = torch.tensor(
    [[-1.0, -1.0, -1.0],
     [-1.0, 8.0, -1.0],
     [-1.0, -1.0, -1.0]]
)

# First-order derivative approximations. SOBEL_V responds to vertical
# intensity change (horizontal edges); SOBEL_H to horizontal change.
SOBEL_V = torch.tensor(
    [[-1.0, -2.0, -1.0],
     [0.0, 0.0, 0.0],
     [1.0, 2.0, 1.0]]
)

SOBEL_H = torch.tensor(
    [[-1.0, 0.0, 1.0],
     [-2.0, 0.0, 2.0],
     [-1.0, 0.0, 1.0]]
)

# Mexican-hat style centre-surround kernel, width 0.55 over a 3x3 support.
RICKER = torch.tensor(
    [[-0.2941, -0.4349, -0.2941],
     [-0.4349, 3.4786, -0.4349],
     [-0.2941, -0.4349, -0.2941]]
)


def gaussian_kernel_1d(kernel_size: int, sigma: float, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Normalised 1D Gaussian taps of odd length `kernel_size`.

    sigma == 0 degenerates to a unit impulse, so convolving with the result
    is the identity.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    half = kernel_size // 2
    if sigma < 1e-12:  # numerically a unit impulse; avoids 0/0 at the centre tap
        taps = torch.zeros(kernel_size, dtype=dtype)
        taps[half] = 1.0
        return taps
    coords = torch.arange(kernel_size, dtype=dtype) - half
    taps = torch.exp(-(coords**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_window_2d(kernel_size: int, sigma: float, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Normalised 2D Gaussian window (outer product of the 1D taps)."""
    taps = gaussian_kernel_1d(kernel_size, sigma, dtype)
    window = torch.outer(taps, taps)
    return window / window.sum()


def correlate2d(x: torch.Tensor, kernel: torch.Tensor, padding: str = "replicate") -> torch.Tensor:
    """Per-channel 2D cross-correlation with a single fixed kernel.

    x: (B, C, H, W). The kernel is applied to every channel independently
    with same-size output; border handling per `padding`.
    """
    k = kernel.to(dtype=x.dtype, device=x.device)
    kh, kw = k.shape
    pad = (kw // 2, kw // 2, kh // 2, kh // 2)
    channels = x.shape[1]
    weight = k.expand(channels, 1, kh, kw)
    padded = torch.nn.functional.pad(x, pad, mode=padding)
    return torch.nn.functional.conv2d(padded, weight, groups=channels)


def kernel_size_for_sigma(sigma: float) -> int:
    """Odd support covering +-3 sigma (minimum 3 taps for sigma > 0)."""
    if sigma <= 0:
        return 1
    return max(3, 2 * math.ceil(3.0 * sigma) + 1)
