"""Shared binary container: version byte, length-prefixed JSON header, payload.

Used for both model checkpoints (many tensors, offset table) and single-tensor
data files. Payloads are little-endian fp32, so files are bit-identical across
platforms.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import CheckpointFormatError

__all__ = ["CONTAINER_VERSION", "write_container", "read_container",
           "write_tensor_file", "read_tensor_file"]

CONTAINER_VERSION = 1
_LEN = struct.Struct("<Q")


def write_container(path, header: dict, payload: bytes) -> None:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(bytes([CONTAINER_VERSION]))
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_container(path) -> Tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if len(data) < 1 + _LEN.size:
        raise CheckpointFormatError(f"{path}: file too short for container header")
    if data[0] != CONTAINER_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported container version {data[0]}")
    (hlen,) = _LEN.unpack_from(data, 1)
    start = 1 + _LEN.size
    if start + hlen > len(data):
        raise CheckpointFormatError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt JSON header: {exc}") from exc
    if not isinstance(header, dict):
        raise CheckpointFormatError(f"{path}: header is not a JSON object")
    return header, data[start + hlen:]


def write_tensor_file(path, array: np.ndarray, name: str = "data") -> None:
    arr = np.ascontiguousarray(array, dtype=np.float32)
    header = {"kind": "tensor", "name": name, "dtype": "f32", "shape": list(arr.shape)}
    write_container(path, header, arr.astype("<f4").tobytes())


def read_tensor_file(path) -> np.ndarray:
    header, payload = read_container(path)
    if header.get("kind") != "tensor" or header.get("dtype") != "f32":
        raise CheckpointFormatError(f"{path}: not an fp32 tensor file")
    shape = tuple(int(s) for s in header["shape"])
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise CheckpointFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
