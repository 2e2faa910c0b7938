"""Checkpoint container for model parameters.

Layout (little-endian throughout):

    bytes 0..5    magic ``LRASR1``
    bytes 6..13   uint64 header length H
    next H bytes  UTF-8 JSON header: model config, vocab size, caller
                  metadata, and a named-array table with shapes and
                  byte offsets into the payload
    remainder     raw float32 array payload, concatenated in table order

Parameters are stored as 32-bit floats; saving and reloading a float32
model reproduces its forward outputs bit-identically.  Optimizer state is
not stored — checkpoints capture parameters, not resumable training state.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import DataError
from .model import AcousticModel, ModelConfig

MAGIC = b"LRASR1"
_LEN_FMT = "<Q"


def save_checkpoint(path, model: AcousticModel, meta: dict = None) -> None:
    state = model.state_dict()
    table = []
    payload = bytearray()
    for name, tensor in state.items():
        arr = np.ascontiguousarray(
            tensor.detach().cpu().to(torch.float32).numpy(), dtype="<f4"
        )
        table.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": len(payload),
        })
        payload.extend(arr.tobytes())
    header = {
        "config": model.config.to_dict(),
        "vocab_size": model.vocab_size,
        "meta": meta or {},
        "arrays": table,
    }
    blob = json.dumps(header, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(_LEN_FMT, len(blob)))
        f.write(blob)
        f.write(bytes(payload))


def _read_header(f, path):
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic {magic!r})")
    raw_len = f.read(struct.calcsize(_LEN_FMT))
    if len(raw_len) != struct.calcsize(_LEN_FMT):
        raise DataError(f"{path}: truncated checkpoint header")
    (header_len,) = struct.unpack(_LEN_FMT, raw_len)
    blob = f.read(header_len)
    if len(blob) != header_len:
        raise DataError(f"{path}: truncated checkpoint header")
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc


def read_meta(path) -> dict:
    """Header metadata without loading the arrays."""
    with open(path, "rb") as f:
        return _read_header(f, path)["meta"]


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, meta)."""
    with open(path, "rb") as f:
        header = _read_header(f, path)
        payload = f.read()
    for key in ("config", "vocab_size", "arrays"):
        if key not in header:
            raise DataError(f"{path}: checkpoint header missing {key!r}")
    config = ModelConfig.from_dict(header["config"])
    model = AcousticModel(config, header["vocab_size"])
    state = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        offset = entry["offset"]
        end = offset + 4 * count
        if end > len(payload):
            raise DataError(
                f"{path}: array {entry['name']!r} overruns the payload"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=count,
                            offset=offset).reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise DataError(f"{path}: parameter names do not match the "
                        f"configuration: {exc}") from exc
    return model, header["meta"]
