import pytest
import torch

from vsrlab.errors import ConfigError, ConsistencyError, ShapeError
from vsrlab.seqcore import (
    AugmentationSpec,
    FrameSequence,
    PatchGrid,
    augment,
    crop_fixed,
    downsample,
    is_too_dark,
    load_clip,
    reassemble,
    save_clip,
    split_into_grid,
    upsample,
)

from conftest import constant_sequence, synthetic_sequence


class TestFrameSequence:
    def test_validates_shape(self):
        with pytest.raises(ShapeError):
            FrameSequence(torch.zeros(3, 4, 4))
        with pytest.raises(ShapeError):
            FrameSequence(torch.zeros(2, 1, 4, 4))

    def test_validates_range(self):
        with pytest.raises(ShapeError):
            FrameSequence(torch.full((1, 3, 4, 4), 1.5))
        with pytest.raises(ShapeError):
            FrameSequence(torch.full((1, 3, 4, 4), float("nan")))

    def test_window(self):
        seq = synthetic_sequence(0, n=5, h=8, w=8)
        win = seq.window(1, 3)
        assert win.n_frames == 3
        assert torch.equal(win.frames, seq.frames[1:4])
        with pytest.raises(ShapeError):
            seq.window(3, 3)


class TestCrop:
    def test_full_frame_crop_is_identity(self):
        seq = synthetic_sequence(1, n=1, h=4, w=4)
        out = crop_fixed(seq, 4, (0, 0))
        assert torch.equal(out.frames, seq.frames)

    def test_crop_shape(self):
        seq = synthetic_sequence(2, n=3, h=128, w=128)
        out = crop_fixed(seq, 64, (0, 0))
        assert out.frames.shape == (3, 3, 64, 64)
        assert torch.equal(out.frames, seq.frames[:, :, :64, :64])

    def test_out_of_bounds(self):
        seq = synthetic_sequence(3, n=1, h=128, w=128)
        with pytest.raises(ShapeError):
            crop_fixed(seq, 64, (120, 120))


class TestGrid:
    def test_64_to_4x4(self, seq64):
        grid = split_into_grid(seq64, 16)
        assert grid.grid_rows == 4 and grid.grid_cols == 4
        assert len(grid.patches) == 16

    def test_32_to_2x2(self):
        seq = synthetic_sequence(4, n=2, h=32, w=32)
        grid = split_into_grid(seq, 16)
        assert grid.grid_rows == 2 and grid.grid_cols == 2
        assert len(grid.patches) == 4

    def test_single_tile_identity(self, tiny_seq):
        grid = split_into_grid(tiny_seq, 16)
        assert len(grid.patches) == 1
        assert torch.equal(grid.patches[0][2].frames, tiny_seq.frames)

    def test_non_divisible_raises(self):
        seq = synthetic_sequence(5, n=1, h=48, w=48)
        with pytest.raises(ShapeError):
            split_into_grid(seq, 20)

    def test_round_trip_bit_exact(self, seq64):
        back = reassemble(split_into_grid(seq64, 16))
        assert torch.equal(back.frames, seq64.frames)

    def test_placement_semantics(self):
        quadrants = {(0, 0): 0.1, (0, 1): 0.2, (1, 0): 0.3, (1, 1): 0.4}
        patches = tuple(
            (r, c, constant_sequence(v, n=1, h=4, w=4)) for (r, c), v in quadrants.items()
        )
        grid = PatchGrid(patches, 2, 2, 4, (8, 8))
        img = reassemble(grid).frames
        for (r, c), v in quadrants.items():
            block = img[0, :, r * 4 : (r + 1) * 4, c * 4 : (c + 1) * 4]
            assert torch.allclose(block, torch.full_like(block, v))

    def test_missing_patch_raises(self, seq64):
        grid = split_into_grid(seq64, 16)
        with pytest.raises(ConsistencyError):
            PatchGrid(grid.patches[:-1], grid.grid_rows, grid.grid_cols, 16, grid.source_shape)

    def test_duplicate_position_raises(self, seq64):
        grid = split_into_grid(seq64, 16)
        patches = grid.patches[:-1] + (grid.patches[0],)
        with pytest.raises(ConsistencyError):
            PatchGrid(patches, grid.grid_rows, grid.grid_cols, 16, grid.source_shape)


class TestDownsample:
    def test_constant_preserved(self):
        seq = constant_sequence(0.5, n=1, h=16, w=16)
        for method in ("bicubic", "bilinear"):
            for factor in (2, 4):
                out = downsample(seq, factor, method)
                assert torch.allclose(out.frames, torch.full_like(out.frames, 0.5), atol=1e-6)

    def test_shapes(self, seq128):
        assert downsample(seq128, 2).frames.shape == (2, 3, 64, 64)
        assert downsample(seq128, 4).frames.shape == (2, 3, 32, 32)

    def test_bilinear_x2_equals_average_pool(self, seq64):
        out = downsample(seq64, 2, "bilinear")
        expected = torch.nn.functional.avg_pool2d(seq64.frames, 2)
        assert torch.allclose(out.frames, expected, atol=1e-6)

    def test_unsupported_factor(self, seq64):
        with pytest.raises(ConfigError):
            downsample(seq64, 3)

    def test_non_divisible(self):
        seq = synthetic_sequence(6, n=1, h=30, w=30)
        with pytest.raises(ShapeError):
            downsample(seq, 4)

    def test_upsample_shapes(self, tiny_seq):
        assert upsample(tiny_seq, 2).frames.shape == (2, 3, 32, 32)
        assert upsample(tiny_seq, 4, "bilinear").frames.shape == (2, 3, 64, 64)


class TestDarkFilter:
    def test_all_zeros_dark(self):
        assert is_too_dark(constant_sequence(0.0), 0.05) is True

    def test_bright_not_dark(self):
        assert is_too_dark(constant_sequence(1.0), 0.05) is False

    def test_strict_boundary(self):
        assert is_too_dark(constant_sequence(0.05), 0.05) is False

    def test_monotone_in_threshold(self, seq64):
        thresholds = [0.0, 0.1, 0.3, 0.5, 0.9, 1.0]
        flags = [is_too_dark(seq64, t) for t in thresholds]
        assert flags == sorted(flags)  # False.. then True..

    def test_border_check_flags_dark_edge(self):
        frames = torch.full((1, 3, 32, 32), 0.5)
        frames[:, :, :, :4] = 0.0  # dark left border
        seq = FrameSequence(frames)
        assert is_too_dark(seq, 0.05) is False
        assert is_too_dark(seq, 0.05, check_borders=True) is True


class TestAugment:
    def test_identity_spec(self, seq64):
        out = augment(seq64, AugmentationSpec(0, False, False))
        assert torch.equal(out.frames, seq64.frames)

    def test_rot180_permutation(self):
        frames = torch.tensor([[1.0, 2.0], [3.0, 4.0]]).expand(1, 3, 2, 2) / 4.0
        seq = FrameSequence(frames.contiguous())
        out = augment(seq, AugmentationSpec(2, False, False))
        expected = torch.tensor([[4.0, 3.0], [2.0, 1.0]]).expand(1, 3, 2, 2) / 4.0
        assert torch.equal(out.frames, expected)

    def test_double_flip_identity(self, seq64):
        spec = AugmentationSpec(0, False, True)
        out = augment(augment(seq64, spec), spec)
        assert torch.equal(out.frames, seq64.frames)

    def test_pixel_permutation(self, seq64):
        out = augment(seq64, AugmentationSpec(1, True, False))
        assert torch.equal(
            out.frames.flatten().sort().values, seq64.frames.flatten().sort().values
        )

    def test_odd_rotation_needs_square(self):
        seq = synthetic_sequence(8, n=1, h=16, w=32)
        with pytest.raises(ShapeError):
            augment(seq, AugmentationSpec(1, False, False))

    def test_sample_is_deterministic(self):
        assert AugmentationSpec.sample(42) == AugmentationSpec.sample(42)

    def test_applied_identically_to_all_frames(self, seq64):
        spec = AugmentationSpec(3, True, True)
        out = augment(seq64, spec)
        for t in range(seq64.n_frames):
            single = FrameSequence(seq64.frames[t : t + 1])
            assert torch.equal(augment(single, spec).frames[0], out.frames[t])


class TestClipIO:
    def test_round_trip(self, tmp_path, seq64):
        save_clip(seq64, tmp_path / "clip")
        back = load_clip(tmp_path / "clip")
        # 8-bit quantisation: exact to within half a level
        assert back.frames.shape == seq64.frames.shape
        assert (back.frames - seq64.frames).abs().max().item() <= 0.5 / 255.0 + 1e-6

    def test_numbering_from_one(self, tmp_path, tiny_seq):
        paths = save_clip(tiny_seq, tmp_path / "c")
        assert paths[0].name == "frame_000001.png"
        assert paths[1].name == "frame_000002.png"

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_clip(tmp_path / "nope")
