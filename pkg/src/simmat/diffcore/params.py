"""Named trainable parameters and deterministic per-name initialization.

Every parameter's initial value is drawn from an RNG seeded by
(master seed, dotted parameter name), so two builds with the same seed are
bit-identical regardless of construction order, and adding a parameter
never perturbs the others.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import IntegrityError
from .tensor import Tensor

__all__ = ["Parameter", "ParamDict", "seed_for", "init_array", "make_parameter"]


@dataclass
class Parameter:
    """A named tensor plus the flag deciding optimizer visibility and counting."""

    name: str
    tensor: Tensor
    trainable: bool = True

    def __post_init__(self):
        self.tensor.requires_grad = self.trainable

    def set_trainable(self, flag: bool) -> None:
        self.trainable = bool(flag)
        self.tensor.requires_grad = self.trainable

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def size(self) -> int:
        return self.tensor.data.size


class ParamDict(dict):
    """Ordered name -> Parameter registry that rejects duplicate names."""

    def add(self, param: Parameter) -> Parameter:
        if param.name in self:
            raise IntegrityError(f"duplicate parameter name: {param.name}")
        self[param.name] = param
        return param

    def trainable(self) -> Iterable[Parameter]:
        return (p for p in self.values() if p.trainable)


def seed_for(master_seed: int, name: str) -> int:
    """Derive a stable 64-bit stream seed from the master seed and a label."""
    digest = hashlib.blake2b(f"{master_seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) resampled until all values fall within +/- 2 std."""
    out = rng.standard_normal(shape).astype(np.float32)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum())).astype(np.float32)
        bad = np.abs(out) > 2.0
    return out * np.float32(std)


def init_array(kind: str, shape, rng: np.random.Generator) -> np.ndarray:
    """Materialize an initial value for a parameter.

    Kinds:
      trunc_normal  - truncated normal, std 0.02 (linear/attention weights, embeddings)
      kaiming       - Kaiming-uniform with fan-in = prod(shape[1:]) (conv kernels)
      zeros / ones  - constants (biases, norm offsets / norm scales)
      normal8       - Normal(0, 8), used for the fixed Fourier frequency matrix
    """
    shape = tuple(shape)
    if kind == "trunc_normal":
        return _truncated_normal(rng, shape, 0.02)
    if kind == "kaiming":
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
        bound = float(np.sqrt(6.0 / fan_in))
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)
    if kind == "zeros":
        return np.zeros(shape, dtype=np.float32)
    if kind == "ones":
        return np.ones(shape, dtype=np.float32)
    if kind == "normal8":
        return (rng.standard_normal(shape) * 8.0).astype(np.float32)
    raise ValueError(f"unknown init kind: {kind}")


def make_parameter(name: str, shape, kind: str, master_seed: int,
                   trainable: bool = True) -> Parameter:
    rng = np.random.default_rng(seed_for(master_seed, name))
    return Parameter(name, Tensor(init_array(kind, shape, rng)), trainable=trainable)
