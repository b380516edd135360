"""Shared helpers for the demo scripts."""

from pathlib import Path

import numpy as np
import torch

from vsrlab.seqcore import FrameSequence

OUTPUT_DIR = Path(__file__).parent / "output"


def make_clip(seed: int = 0, n: int = 4, h: int = 64, w: int = 64) -> FrameSequence:
    """Synthetic clip: colour gradients plus a moving bright square."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    frames = []
    for t in range(n):
        base = np.stack(
            [
                0.5 + 0.35 * np.sin(2 * np.pi * (xx / w + 0.1 * t)),
                0.5 + 0.35 * np.cos(2 * np.pi * (yy / h - 0.05 * t)),
                0.35 + 0.3 * np.sin(2 * np.pi * ((xx + yy) / (h + w) + 0.07 * t)),
            ],
            axis=0,
        )
        side = max(4, h // 8)
        top = (3 * t) % (h - side)
        left = (5 * t) % (w - side)
        base[:, top : top + side, left : left + side] = 0.9
        base += rng.normal(0.0, 0.01, size=base.shape)
        frames.append(np.clip(base, 0.0, 1.0))
    return FrameSequence(torch.from_numpy(np.stack(frames)).float())


def out_dir(name: str) -> Path:
    path = OUTPUT_DIR / name
    path.mkdir(parents=True, exist_ok=True)
    return path
