"""Bit-exact checkpoints: every named tensor of a model (+ optional MAT layer).

The header's metadata is a string-to-string map carrying JSON snapshots of the
configs and the master seed, so a checkpoint is self-describing: loading
rebuilds the exact structure (including any injection) and then overwrites
tensor data, validating names and shapes along the way.
"""

from __future__ import annotations

import json
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..container import read_container, write_container
from ..errors import CheckpointFormatError
from .build import Model, build_model
from .config import ModelConfig

__all__ = ["save_checkpoint", "load_checkpoint", "load_into", "named_arrays"]

FORMAT_VERSION = 1


def named_arrays(model: Model, mat=None) -> Dict[str, np.ndarray]:
    """All serialized tensors, in a stable order: buffers, model params, MAT params."""
    out: Dict[str, np.ndarray] = {}
    for name, arr in model.buffers.items():
        out[name] = arr
    for name, p in model.params.items():
        out[name] = p.tensor.data
    if mat is not None:
        for name, p in mat.params.items():
            out[name] = p.tensor.data
    return out


def checkpoint_metadata(model: Model, mat=None, extra: Optional[Mapping[str, str]] = None
                        ) -> Dict[str, str]:
    meta = {
        "model_config": json.dumps(model.config.to_dict(), sort_keys=True),
        "master_seed": str(model.master_seed),
    }
    if model.peft is not None:
        meta["peft_config"] = json.dumps(model.peft.to_dict(), sort_keys=True)
    if mat is not None:
        meta["mat_config"] = json.dumps(mat.config.to_dict(), sort_keys=True)
    if extra:
        for key, value in extra.items():
            meta[str(key)] = str(value)
    return meta


def save_checkpoint(model: Model, path, mat=None,
                    extra_metadata: Optional[Mapping[str, str]] = None) -> None:
    tensors = named_arrays(model, mat)
    table = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype=np.float32).astype("<f4").tobytes()
        table.append({"name": name, "dtype": "f32", "shape": list(arr.shape),
                      "offset": offset})
        chunks.append(blob)
        offset += len(blob)
    header = {
        "kind": "checkpoint",
        "format_version": FORMAT_VERSION,
        "metadata": checkpoint_metadata(model, mat, extra_metadata),
        "tensors": table,
    }
    write_container(path, header, b"".join(chunks))


def _read_table(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    header, payload = read_container(path)
    if header.get("kind") != "checkpoint":
        raise CheckpointFormatError(f"{path}: not a checkpoint container")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported checkpoint format_version {header.get('format_version')}")
    table = header.get("tensors")
    if not isinstance(table, list):
        raise CheckpointFormatError(f"{path}: missing tensor table")

    arrays: Dict[str, np.ndarray] = {}
    expected_offset = 0
    for entry in table:
        name = entry.get("name", "<unnamed>")
        if entry.get("dtype") != "f32":
            raise CheckpointFormatError(f"{path}: tensor {name}: unsupported dtype")
        offset = int(entry["offset"])
        if offset != expected_offset:
            raise CheckpointFormatError(
                f"{path}: tensor {name}: offset {offset} breaks contiguity "
                f"(expected {expected_offset})")
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(payload):
            raise CheckpointFormatError(
                f"{path}: tensor {name}: payload truncated "
                f"(needs {offset + nbytes} bytes, have {len(payload)})")
        arrays[name] = np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape)),
                                     offset=offset).reshape(shape).astype(np.float32)
        expected_offset = offset + nbytes
    if expected_offset != len(payload):
        raise CheckpointFormatError(
            f"{path}: payload has {len(payload) - expected_offset} trailing bytes")
    return header, arrays


def load_into(model: Model, path, mat=None) -> None:
    """Fill an existing structure from a checkpoint, validating every shape."""
    _, arrays = _read_table(path)
    expected = named_arrays(model, mat)
    for name, arr in arrays.items():
        if name not in expected:
            raise CheckpointFormatError(f"{path}: unexpected tensor {name}")
        if expected[name].shape != arr.shape:
            raise CheckpointFormatError(
                f"{path}: tensor {name}: shape {list(arr.shape)} does not match "
                f"configured shape {list(expected[name].shape)}")
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise CheckpointFormatError(f"{path}: missing tensor {missing[0]}")
    # all validated; only now mutate
    for name, arr in arrays.items():
        expected[name][...] = arr


def load_checkpoint(path):
    """Rebuild (model, mat) from a self-describing checkpoint file."""
    from ..mat import MATConfig, build_mat  # deferred: mat imports model
    from ..peft import PEFTConfig, inject

    header, _ = _read_table(path)
    meta = header.get("metadata", {})
    try:
        config = ModelConfig.from_dict(json.loads(meta["model_config"]))
        seed = int(meta["master_seed"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: invalid metadata: {exc}") from exc

    model = build_model(config, seed)
    if "peft_config" in meta:
        inject(model, PEFTConfig.from_dict(json.loads(meta["peft_config"])))
    mat = None
    if "mat_config" in meta:
        mat = build_mat(MATConfig.from_dict(json.loads(meta["mat_config"])), model)
    load_into(model, path, mat)
    return model, mat
