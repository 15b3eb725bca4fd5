"""Checkpoint files.

Layout: 8-byte magic, uint32 version, uint32 header length, a UTF-8 JSON
header (model config, metadata, tensor names and shapes), then every tensor
as raw little-endian float32 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import DenoiserConfig, ToyDenoiser

MAGIC = b"PXPLCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: ToyDenoiser, path: str | Path, meta: dict | None = None) -> None:
    state = model.state_dict()
    header = {
        "config": model.cfg.to_dict(),
        "meta": meta or {},
        "tensors": [[name, list(t.shape)] for name, t in state.items()],
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hb)))
        fh.write(hb)
        for t in state.values():
            fh.write(np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f4").tobytes())


def load_checkpoint(path: str | Path, dtype: torch.dtype = torch.float32) -> tuple[ToyDenoiser, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    cfg = DenoiserConfig(**header["config"])
    with torch.random.fork_rng(devices=[]):
        model = ToyDenoiser(cfg).to(dtype)
    offset = 16 + hlen
    state = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape)) if shape else 1
        end = offset + 4 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated at tensor {name}")
        arr = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(arr.copy()).to(dtype)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    model.load_state_dict(state)
    model.eval()
    return model, header["meta"]
