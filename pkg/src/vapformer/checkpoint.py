"""Binary checkpoint format `vapf-v1`.

Layout: 8-byte magic `VAPFCKPT`, little-endian u32 version, u64 header
length, UTF-8 JSON header, then contiguous little-endian float32 payloads.
The header maps each tensor name to shape/offset/dtype and echoes the freeze
mask, run configuration, and a metric snapshot. Tensors are laid out in
sorted-name order, so identical contents always serialize to identical bytes.

Training math runs in float64; checkpoints round to float32 for space. The
round-trip float64 -> float32 -> float64 is exact on the second pass, which
is what the bit-exactness contracts rely on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatchError, DataFormatError

MAGIC = b"VAPFCKPT"
VERSION = 1
FORMAT_NAME = "vapf-v1"


@dataclass
class Checkpoint:
    tensors: dict
    freeze_mask: set
    config: dict
    metrics: dict


def tensor_bytes(array):
    """Canonical f32 little-endian bytes of one tensor (used by freeze audits)."""
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def serialize(store, config=None, metrics=None) -> bytes:
    names = sorted(store.names())
    entries = {}
    payload = bytearray()
    for name in names:
        data = np.ascontiguousarray(store[name].data, dtype="<f4")
        entries[name] = {"shape": list(data.shape), "offset": len(payload), "dtype": "f32"}
        payload.extend(data.tobytes(order="C"))
    header = {
        "format": FORMAT_NAME,
        "tensors": entries,
        "freeze_mask": sorted(store.freeze_mask),
        "config": config or {},
        "metrics": metrics or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(header_bytes)) + header_bytes + bytes(payload)


def parse(blob: bytes) -> Checkpoint:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise DataFormatError("not a vapf-v1 checkpoint: bad magic")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", blob, 12)
    header_end = 20 + header_len
    if len(blob) < header_end:
        raise DataFormatError("truncated checkpoint header")
    try:
        header = json.loads(blob[20:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"malformed checkpoint header: {e}") from None
    payload = blob[header_end:]
    tensors = {}
    for name, meta in header["tensors"].items():
        if meta.get("dtype") != "f32":
            raise DataFormatError(f"tensor {name}: unsupported dtype {meta.get('dtype')!r}")
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise DataFormatError(f"tensor {name}: payload out of range")
        tensors[name] = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
    return Checkpoint(
        tensors=tensors,
        freeze_mask=set(header.get("freeze_mask", [])),
        config=header.get("config", {}),
        metrics=header.get("metrics", {}),
    )


def save_checkpoint(path, store, config=None, metrics=None) -> bytes:
    blob = serialize(store, config, metrics)
    Path(path).write_bytes(blob)
    return blob


def load_checkpoint(path) -> Checkpoint:
    return parse(Path(path).read_bytes())


def load_into_store(store, ckpt: Checkpoint, allow_fresh=None):
    """Copy checkpoint tensors into the store, upcasting to float64.

    `allow_fresh(name)` marks store entries permitted to be absent from the
    checkpoint (newly introduced parameters keep their initialization). Any
    other name mismatch, in either direction, fails with the full lists.
    """
    store_names = set(store.names())
    ckpt_names = set(ckpt.tensors)
    fresh = {n for n in store_names if allow_fresh and allow_fresh(n)}
    missing_in_ckpt = sorted(store_names - ckpt_names - fresh)
    missing_in_model = sorted(ckpt_names - store_names)
    if missing_in_ckpt or missing_in_model:
        raise CheckpointMismatchError(
            "checkpoint/model mismatch: "
            f"missing in checkpoint: {missing_in_ckpt}; missing in model: {missing_in_model}",
            missing_in_checkpoint=missing_in_ckpt,
            missing_in_model=missing_in_model,
        )
    for name in sorted(store_names & ckpt_names):
        tensor = store[name]
        loaded = ckpt.tensors[name]
        if tuple(loaded.shape) != tensor.data.shape:
            raise CheckpointMismatchError(
                f"tensor {name}: checkpoint shape {tuple(loaded.shape)} != model shape {tensor.data.shape}"
            )
        tensor.data = loaded.astype(np.float64)
        tensor.grad = None
