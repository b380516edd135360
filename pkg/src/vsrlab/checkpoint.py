"""Binary checkpoint archive: JSON text header plus raw float blobs.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then each tensor's raw bytes in header order. Tensors are stored as
little-endian float32 (or float16 when requested) in C order; save followed
by load is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .errors import ConfigError

MAGIC = b"VSRLCKPT"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": (torch.float32, "<f4"),
    "float16": (torch.float16, "<f2"),
}


def save_checkpoint(
    path: str | Path,
    meta: dict[str, Any],
    tensors: dict[str, torch.Tensor],
    dtype: str = "float32",
) -> None:
    if dtype not in _DTYPES:
        raise ConfigError(f"unsupported checkpoint dtype {dtype!r}")
    torch_dtype, np_dtype = _DTYPES[dtype]
    entries = [
        {"name": name, "shape": list(t.shape), "dtype": dtype} for name, t in tensors.items()
    ]
    header = {"format_version": FORMAT_VERSION, "meta": meta, "tensors": entries}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name, t in tensors.items():
            blob = t.detach().to(torch_dtype).contiguous().cpu().numpy().astype(np_dtype, copy=False)
            fh.write(blob.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, torch.Tensor]]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ConfigError(f"{path} is not a vsrlab checkpoint")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format version in {path}")
        tensors: dict[str, torch.Tensor] = {}
        for entry in header["tensors"]:
            torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * np.dtype(np_dtype).itemsize)
            arr = np.frombuffer(raw, dtype=np_dtype).reshape(shape)
            tensors[entry["name"]] = torch.from_numpy(arr.copy()).to(torch_dtype)
    return header["meta"], tensors
