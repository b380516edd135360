import pytest
import torch

from vsrlab.checkpoint import load_checkpoint, save_checkpoint
from vsrlab.errors import ConfigError


def test_round_trip_bit_exact(tmp_path):
    torch.manual_seed(0)
    tensors = {
        "a.weight": torch.randn(4, 3, 3, 3),
        "a.bias": torch.randn(4),
        "scalar": torch.tensor(3.25),
    }
    meta = {"kind": "test", "nested": {"x": [1, 2, 3]}}
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, meta, tensors)
    meta_back, tensors_back = load_checkpoint(path)
    assert meta_back == meta
    assert list(tensors_back) == list(tensors)
    for name in tensors:
        assert torch.equal(tensors[name], tensors_back[name])
        assert tensors_back[name].dtype == torch.float32


def test_float16_storage(tmp_path):
    t = torch.randn(8, 8)
    save_checkpoint(tmp_path / "h.ckpt", {"kind": "test"}, {"t": t}, dtype="float16")
    _, back = load_checkpoint(tmp_path / "h.ckpt")
    assert back["t"].dtype == torch.float16
    assert torch.equal(back["t"], t.to(torch.float16))


def test_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(ConfigError):
        load_checkpoint(path)


def test_rejects_unknown_dtype(tmp_path):
    with pytest.raises(ConfigError):
        save_checkpoint(tmp_path / "x.ckpt", {}, {"t": torch.zeros(2)}, dtype="bfloat16")


def test_header_order_preserved(tmp_path):
    tensors = {f"t{i}": torch.full((2,), float(i)) for i in range(5)}
    save_checkpoint(tmp_path / "o.ckpt", {}, tensors)
    _, back = load_checkpoint(tmp_path / "o.ckpt")
    assert list(back) == [f"t{i}" for i in range(5)]
    for i in range(5):
        assert back[f"t{i}"][0].item() == float(i)
