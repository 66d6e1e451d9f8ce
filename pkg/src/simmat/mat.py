"""Modality-agnostic transfer layers and their parameter / FLOPs accounting.

Variants map a C-channel input onto the token grid the pretrained encoder
expects:

  scratch-patch-embed   fresh strided-conv embedding C->D; used with a freshly
                        initialized model downstream (the from-scratch baseline)
  random-init-embed     fresh strided-conv embedding C->D, pretrained encoder kept
  linear-projection     1x1 conv C->3 feeding the inherited patch embedding
  conv-stack            k x k conv stack with ReLU, ending in a 1x1 conv to a
                        3-channel pseudo image, feeding the inherited embedding
  transpose-to-batch    each channel replicated to 3 channels and pushed through
                        the inherited embedding AND the encoder trunk separately;
                        trunk outputs averaged over channels

The conv-stack internal shape is first layer C->d (k x k), middle layers d->d
(k x k), final layer d->3 (1x1), biases throughout; all convolutions use
stride 1 and same-padding so the token geometry is fixed by the inherited
patch embedding alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .diffcore import ParamDict, Parameter, Tensor, init_array, seed_for
from .errors import ConfigurationError, DimensionError, UnsupportedVariantError
from .model.build import Model
from .model.config import ModelConfig

__all__ = [
    "SCRATCH_PATCH_EMBED", "RANDOM_INIT_EMBED", "LINEAR_PROJECTION", "CONV_STACK",
    "TRANSPOSE_TO_BATCH", "VARIANTS", "MATConfig", "MATModule", "build_mat",
    "mat_forward", "mat_param_count", "FlopsReport", "flops_report",
]

SCRATCH_PATCH_EMBED = "scratch-patch-embed"
RANDOM_INIT_EMBED = "random-init-embed"
LINEAR_PROJECTION = "linear-projection"
CONV_STACK = "conv-stack"
TRANSPOSE_TO_BATCH = "transpose-to-batch"
VARIANTS = (SCRATCH_PATCH_EMBED, RANDOM_INIT_EMBED, LINEAR_PROJECTION,
            CONV_STACK, TRANSPOSE_TO_BATCH)

_FRESH_EMBED_VARIANTS = (SCRATCH_PATCH_EMBED, RANDOM_INIT_EMBED)


@dataclass(frozen=True)
class MATConfig:
    variant: str
    channels: int
    n: int = 2
    k: int = 3
    d: int = 64
    freeze_pretrained_embed: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown MAT variant {self.variant!r}; choose one of {VARIANTS}")
        if self.channels < 1:
            raise ConfigurationError(f"channels must be >= 1, got {self.channels}")
        if self.variant == CONV_STACK:
            if self.n < 1:
                raise ConfigurationError(f"conv-stack needs n >= 1, got {self.n}")
            if self.k < 1 or self.k % 2 == 0:
                raise ConfigurationError(f"conv-stack kernel must be odd, got {self.k}")
            if self.d < 1:
                raise ConfigurationError(f"conv-stack width must be >= 1, got {self.d}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MATConfig":
        return cls(**data)


def _stack_layers(config: MATConfig) -> List[Tuple[int, int, int]]:
    """(cin, cout, kernel) per conv of the stack; n=1 degenerates to 1x1 C->3."""
    if config.n == 1:
        return [(config.channels, 3, 1)]
    layers = [(config.channels, config.d, config.k)]
    layers += [(config.d, config.d, config.k)] * (config.n - 2)
    layers.append((config.d, 3, 1))
    return layers


class MATModule:
    """Built transfer layer: its own `mat.*` parameters plus the host model."""

    def __init__(self, config: MATConfig, model: Model):
        self.config = config
        self.model = model
        self.params = ParamDict()

    def set_trainable(self, flag: bool) -> None:
        for p in self.params.values():
            p.set_trainable(flag)


def build_mat(config: MATConfig, model: Optional[Model]) -> MATModule:
    """Construct the variant against a host model.

    The host provides token geometry and, for the inherited-embedding variants,
    the pretrained patch-embedding weights (frozen here when the config says
    so). Fresh-embedding variants create their own `mat.embed.*` parameters.
    """
    if model is None:
        need = "pretrained patch-embedding parameters" \
            if config.variant not in _FRESH_EMBED_VARIANTS else "token geometry"
        raise ConfigurationError(
            f"MAT variant {config.variant!r} requires a host model ({need})")
    config.validate()
    mat = MATModule(config, model)
    seed = model.master_seed

    def add(name: str, shape, kind: str) -> None:
        rng = np.random.default_rng(seed_for(seed, name))
        mat.params.add(Parameter(name, Tensor(init_array(kind, shape, rng))))

    if config.variant in _FRESH_EMBED_VARIANTS:
        d = model.config.embed_dim
        p = model.config.patch_size
        add("mat.embed.weight", (d, config.channels, p, p), "kaiming")
        add("mat.embed.bias", (d,), "zeros")
    elif config.variant in (LINEAR_PROJECTION, CONV_STACK):
        layers = [(config.channels, 3, 1)] if config.variant == LINEAR_PROJECTION \
            else _stack_layers(config)
        for i, (cin, cout, k) in enumerate(layers):
            add(f"mat.stack.conv{i}.weight", (cout, cin, k, k), "kaiming")
            add(f"mat.stack.conv{i}.bias", (cout,), "zeros")
    # transpose-to-batch owns no parameters

    if config.variant not in _FRESH_EMBED_VARIANTS and config.freeze_pretrained_embed:
        model.param("encoder.patch_embed.weight").set_trainable(False)
        model.param("encoder.patch_embed.bias").set_trainable(False)
    return mat


def _check_channels(mat: MATModule, x: Tensor) -> None:
    if x.data.ndim != 3 or x.shape[0] != mat.config.channels:
        raise DimensionError(
            f"MAT configured for {mat.config.channels} channels, input has shape {x.shape}")


def mat_forward(mat: MATModule, x: Tensor) -> Tensor:
    """Map a [C,H,W] input onto the encoder's token grid.

    Token-level variants return patch-embedding output ready for the encoder.
    transpose-to-batch runs the encoder trunk once per channel and returns the
    channel-averaged trunk output (same [(H/P)^2, D] geometry); only the neck
    remains to be applied.
    """
    from .model.forward import embed_pseudo_rgb, encode_tokens
    from .diffcore import concat

    _check_channels(mat, x)
    cfg = mat.config
    model = mat.model

    if cfg.variant in _FRESH_EMBED_VARIANTS:
        p = model.config.patch_size
        grid = model.config.grid
        emb = x.conv2d(mat.params["mat.embed.weight"].tensor,
                       mat.params["mat.embed.bias"].tensor, stride=p, padding=0)
        tokens = emb.reshape(model.config.embed_dim, grid * grid).transpose(1, 0)
        return tokens + model.param("encoder.pos_embed").tensor

    if cfg.variant in (LINEAR_PROJECTION, CONV_STACK):
        layers = [(cfg.channels, 3, 1)] if cfg.variant == LINEAR_PROJECTION \
            else _stack_layers(cfg)
        h = x
        for i, (_, _, k) in enumerate(layers):
            h = h.conv2d(mat.params[f"mat.stack.conv{i}.weight"].tensor,
                         mat.params[f"mat.stack.conv{i}.bias"].tensor,
                         stride=1, padding=(k - 1) // 2)
            if i < len(layers) - 1:
                h = h.relu()
        return embed_pseudo_rgb(model, h)

    # transpose-to-batch
    acc = None
    for c in range(cfg.channels):
        chan = x[c:c + 1, :, :]
        pseudo = concat([chan, chan, chan], axis=0)
        hidden = encode_tokens(model, embed_pseudo_rgb(model, pseudo))
        acc = hidden if acc is None else acc + hidden
    return acc * (1.0 / cfg.channels)


def mat_param_count(config: MATConfig) -> int:
    """Closed-form parameter count (weights + biases) of the projection stack."""
    if config.variant not in (CONV_STACK, LINEAR_PROJECTION):
        raise UnsupportedVariantError(
            f"closed-form count defined only for conv-stack and linear-projection; "
            f"use count_params on the built module for {config.variant!r}")
    c, n, k, d = config.channels, config.n, config.k, config.d
    if config.variant == LINEAR_PROJECTION or n == 1:
        return 3 * c + 3
    first = c * d * k * k + d
    middle = (n - 2) * (d * d * k * k + d)
    last = 3 * d + 3
    return first + middle + last


@dataclass(frozen=True)
class FlopsReport:
    """Analytic multiply-accumulate counts for one forward pass.

    `ratio_vs_conv_stack` compares encoder-path MACs (patch embedding +
    transformer trunk + neck) against the conv-stack variant at the same
    channel count, resolution and model config; the projection stack's own
    (comparatively small) cost is reported separately in `mat_macs`.
    """

    variant: str
    mat_macs: int
    embed_macs: int
    encoder_macs: int
    ratio_vs_conv_stack: float

    @property
    def total_macs(self) -> int:
        return self.mat_macs + self.embed_macs + self.encoder_macs

    def to_dict(self) -> dict:
        return {"variant": self.variant, "mat_macs": self.mat_macs,
                "embed_macs": self.embed_macs, "encoder_macs": self.encoder_macs,
                "total_macs": self.total_macs,
                "ratio_vs_conv_stack": self.ratio_vs_conv_stack}


def _conv_macs(cin: int, cout: int, k: int, hout: int, wout: int) -> int:
    return cin * cout * k * k * hout * wout


def _trunk_macs(model_config: ModelConfig, resolution: int) -> int:
    """Transformer blocks + neck at the given resolution."""
    d = model_config.embed_dim
    n = (resolution // model_config.patch_size) ** 2
    hidden = model_config.mlp_hidden
    per_block = 4 * n * d * d + 2 * n * n * d + 2 * n * d * hidden
    return model_config.depth * per_block + n * d * model_config.decoder_dim


def _embed_macs(model_config: ModelConfig, cin: int, resolution: int) -> int:
    p = model_config.patch_size
    n = (resolution // p) ** 2
    return cin * model_config.embed_dim * p * p * n


def _mat_macs(config: MATConfig, resolution: int) -> int:
    if config.variant == LINEAR_PROJECTION:
        return _conv_macs(config.channels, 3, 1, resolution, resolution)
    if config.variant == CONV_STACK:
        return sum(_conv_macs(cin, cout, k, resolution, resolution)
                   for cin, cout, k in _stack_layers(config))
    return 0


def flops_report(config: MATConfig, model_config: ModelConfig,
                 resolution: int) -> FlopsReport:
    if resolution % model_config.patch_size != 0:
        raise ConfigurationError(
            f"resolution {resolution} not divisible by patch size {model_config.patch_size}")
    trunk = _trunk_macs(model_config, resolution)
    if config.variant in _FRESH_EMBED_VARIANTS:
        embed = _embed_macs(model_config, config.channels, resolution)
        encoder = trunk
    elif config.variant == TRANSPOSE_TO_BATCH:
        embed = config.channels * _embed_macs(model_config, 3, resolution)
        encoder = config.channels * trunk
    else:
        embed = _embed_macs(model_config, 3, resolution)
        encoder = trunk
    mat_cost = _mat_macs(config, resolution)

    base_embed = _embed_macs(model_config, 3, resolution)
    ratio = (embed + encoder) / (base_embed + trunk)
    return FlopsReport(variant=config.variant, mat_macs=mat_cost, embed_macs=embed,
                       encoder_macs=encoder, ratio_vs_conv_stack=float(ratio))
