"""Model construction: the parameter plan, deterministic init, and counting.

The plan (name, shape, init kind) is the single source of truth for the
parameter set; building materializes it, the census walks it shape-only, and
checkpoint loading validates files against it.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..diffcore import ParamDict, Parameter, Tensor, init_array, seed_for
from ..errors import ConfigurationError
from .config import DECODER_MLP_RATIO, ModelConfig

__all__ = ["Model", "param_plan", "buffer_plan", "build_model", "count_params",
           "count_plan", "freeze_all"]

PlanEntry = Tuple[str, tuple, str]

# name -> shape/kind of persistent non-trainable arrays (serialized, never counted)
BUFFER_PLAN = (("prompt.fourier_freqs", ("fourier_bands", 2), "normal8"),)


def _attn_entries(prefix: str, dim: int) -> List[PlanEntry]:
    out = []
    for part in ("q", "k", "v", "proj"):
        out.append((f"{prefix}.{part}.weight", (dim, dim), "trunc_normal"))
        out.append((f"{prefix}.{part}.bias", (dim,), "zeros"))
    return out


def _norm_entries(prefix: str, dim: int) -> List[PlanEntry]:
    return [(f"{prefix}.gamma", (dim,), "ones"), (f"{prefix}.beta", (dim,), "zeros")]


def _mlp_entries(prefix: str, dim: int, hidden: int) -> List[PlanEntry]:
    return [
        (f"{prefix}.fc1.weight", (hidden, dim), "trunc_normal"),
        (f"{prefix}.fc1.bias", (hidden,), "zeros"),
        (f"{prefix}.fc2.weight", (dim, hidden), "trunc_normal"),
        (f"{prefix}.fc2.bias", (dim,), "zeros"),
    ]


def param_plan(config: ModelConfig) -> List[PlanEntry]:
    """Every (name, shape, init kind) of the model, in serialization order."""
    d = config.embed_dim
    dd = config.decoder_dim
    n = config.token_count
    bands = config.fourier_bands
    f1, f2 = config.upscale_factors()
    plan: List[PlanEntry] = []

    plan.append(("encoder.patch_embed.weight", (d, 3, config.patch_size, config.patch_size), "kaiming"))
    plan.append(("encoder.patch_embed.bias", (d,), "zeros"))
    plan.append(("encoder.pos_embed", (n, d), "trunc_normal"))
    for i in range(config.depth):
        b = f"encoder.block{i}"
        plan += _norm_entries(f"{b}.norm1", d)
        plan += _attn_entries(f"{b}.attn", d)
        plan += _norm_entries(f"{b}.norm2", d)
        plan += _mlp_entries(f"{b}.mlp", d, config.mlp_hidden)
    plan += _norm_entries("encoder.norm", d)
    plan.append(("encoder.neck.weight", (dd, d), "trunc_normal"))
    plan.append(("encoder.neck.bias", (dd,), "zeros"))

    plan.append(("prompt.label_embed", (2, 2 * bands), "trunc_normal"))
    plan.append(("prompt.proj.weight", (dd, 4 * bands), "trunc_normal"))
    plan.append(("prompt.proj.bias", (dd,), "zeros"))

    plan.append(("decoder.mask_token", (1, dd), "trunc_normal"))
    plan.append(("decoder.pos_embed", (n, dd), "trunc_normal"))
    for i in range(config.decoder_depth):
        b = f"decoder.block{i}"
        plan += _norm_entries(f"{b}.norm1", dd)
        plan += _attn_entries(f"{b}.self_attn", dd)
        plan += _norm_entries(f"{b}.norm2", dd)
        plan += _attn_entries(f"{b}.cross_q", dd)
        plan += _norm_entries(f"{b}.norm3", dd)
        plan += _mlp_entries(f"{b}.mlp", dd, DECODER_MLP_RATIO * dd)
        plan += _norm_entries(f"{b}.norm4", dd)
        plan += _attn_entries(f"{b}.cross_i", dd)
    plan += _norm_entries("decoder.norm_img", dd)
    plan.append(("decoder.upscale1.weight", (dd, dd // 2, f1, f1), "kaiming"))
    plan.append(("decoder.upscale1.bias", (dd // 2,), "zeros"))
    plan.append(("decoder.upscale2.weight", (dd // 2, dd // 4, f2, f2), "kaiming"))
    plan.append(("decoder.upscale2.bias", (dd // 4,), "zeros"))
    plan.append(("decoder.hyper.weight", (dd // 4, dd), "trunc_normal"))
    plan.append(("decoder.hyper.bias", (dd // 4,), "zeros"))
    return plan


def buffer_plan(config: ModelConfig) -> List[PlanEntry]:
    out = []
    for name, shape, kind in BUFFER_PLAN:
        resolved = tuple(getattr(config, s) if isinstance(s, str) else s for s in shape)
        out.append((name, resolved, kind))
    return out


class Model:
    """The foundation model: config, named parameters, fixed buffers.

    `peft` carries the injection config once `peft.inject` has run; forward
    passes consult it for low-rank/adapter scales and prompt tokens.
    """

    def __init__(self, config: ModelConfig, master_seed: int):
        self.config = config
        self.master_seed = master_seed
        self.params = ParamDict()
        self.buffers: Dict[str, np.ndarray] = {}
        self.peft = None
        self._local_cache: Dict[str, Dict[str, Parameter]] = {}

    def param(self, name: str) -> Parameter:
        return self.params[name]

    def add_param(self, param: Parameter) -> Parameter:
        self._local_cache.clear()
        return self.params.add(param)

    def remove_param(self, name: str) -> None:
        self._local_cache.clear()
        del self.params[name]

    def local_params(self, prefix: str) -> Dict[str, Parameter]:
        """Parameters under `prefix.`, keyed by their local (stripped) name."""
        cached = self._local_cache.get(prefix)
        if cached is None:
            head = prefix + "."
            cached = {name[len(head):]: p for name, p in self.params.items()
                      if name.startswith(head)}
            self._local_cache[prefix] = cached
        return cached


def build_model(config: ModelConfig, seed: int) -> Model:
    """Materialize the plan with per-parameter seeded init."""
    config.validate()
    model = Model(config, seed)
    for name, shape, kind in param_plan(config):
        rng = np.random.default_rng(seed_for(seed, name))
        model.add_param(Parameter(name, Tensor(init_array(kind, shape, rng))))
    for name, shape, kind in buffer_plan(config):
        rng = np.random.default_rng(seed_for(seed, name))
        model.buffers[name] = init_array(kind, shape, rng)
    return model


def _iter_params(target) -> Iterable[Parameter]:
    if isinstance(target, Model):
        return target.params.values()
    if isinstance(target, Mapping):
        return target.values()
    return target.params.values()  # MAT module or anything param-bearing


def count_params(target, selector: str = "all") -> int:
    """Sum element counts; selector is "all", "trainable", or a name prefix."""
    total = 0
    for p in _iter_params(target):
        if selector == "trainable" and not p.trainable:
            continue
        if selector not in ("all", "trainable") and not p.name.startswith(selector):
            continue
        total += p.size
    return total


def count_plan(plan: Iterable[PlanEntry], prefix: str = "") -> int:
    """Shape-only census over a plan; no arrays are materialized."""
    total = 0
    for name, shape, _ in plan:
        if name.startswith(prefix):
            total += int(np.prod(shape))
    return total


def freeze_all(model: Model) -> None:
    for p in model.params.values():
        p.set_trainable(False)
