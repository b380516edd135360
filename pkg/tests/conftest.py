import numpy as np
import pytest
import torch

from vsrlab.seqcore import FrameSequence


def synthetic_frames(seed: int, n: int = 3, h: int = 64, w: int = 64) -> torch.Tensor:
    """Deterministic clip with gradients, a moving square, and mild noise."""
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
        side = min(max(4, h // 8), h // 2, w // 2)
        top = (3 * t) % max(1, h - side)
        left = (5 * t) % max(1, w - side)
        base[:, top : top + side, left : left + side] = 0.9
        base += rng.normal(0.0, 0.015, size=base.shape)
        frames.append(np.clip(base, 0.0, 1.0))
    return torch.from_numpy(np.stack(frames)).float()


def synthetic_sequence(seed: int, n: int = 3, h: int = 64, w: int = 64) -> FrameSequence:
    return FrameSequence(synthetic_frames(seed, n, h, w))


@pytest.fixture
def seq64() -> FrameSequence:
    return synthetic_sequence(7, n=3, h=64, w=64)


@pytest.fixture
def seq128() -> FrameSequence:
    return synthetic_sequence(11, n=2, h=128, w=128)


@pytest.fixture
def tiny_seq() -> FrameSequence:
    return synthetic_sequence(3, n=2, h=16, w=16)


def constant_sequence(value: float, n: int = 2, h: int = 16, w: int = 16) -> FrameSequence:
    return FrameSequence(torch.full((n, 3, h, w), value))
