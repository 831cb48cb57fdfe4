"""Single-file parameter container: JSON header + named float32 tensors."""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch

from .model import LipReader, ModelConfig

MAGIC = b"MVCK"
VERSION = 1


def save_checkpoint(path: str | Path, model: LipReader, extra: dict | None = None) -> None:
    """Write model parameters as little-endian float32 with a JSON header."""
    names = sorted(model.state_dict().keys())
    state = model.state_dict()
    header = {
        "version": VERSION,
        "model_config": model.cfg.to_dict(),
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            fh.write(state[n].detach().cpu().to(torch.float32).numpy()
                     .astype("<f4").tobytes(order="C"))


def read_checkpoint(path: str | Path) -> Tuple[dict, Dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    offset = 8 + hlen
    tensors: Dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64)) if spec["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        tensors[spec["name"]] = arr.reshape(spec["shape"]).copy()
        offset += count * 4
    return header, tensors


def load_model(path: str | Path) -> Tuple[LipReader, dict]:
    """Rebuild a LipReader from a checkpoint; loading is bit-exact.

    The model comes back in eval mode (dropout off) ready for inference.
    """
    header, tensors = read_checkpoint(path)
    model = LipReader(ModelConfig.from_dict(header["model_config"]))
    state = {n: torch.from_numpy(a) for n, a in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model, header
