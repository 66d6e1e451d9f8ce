"""Forward passes of the foundation model and the full transfer composition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..diffcore import Tensor, attention_block, concat, linear, mlp, multihead_attention
from ..errors import DimensionError, InputError
from .build import Model

__all__ = ["PromptPoint", "patch_embed", "embed_pseudo_rgb", "encode_tokens",
           "apply_neck", "encode_image", "encode_prompt", "decode_mask",
           "forward", "simmat_forward"]


@dataclass(frozen=True)
class PromptPoint:
    """A click prompt in original image coordinates."""

    row: int
    col: int
    label: bool = True


def _injection_scales(model: Model):
    cfg = model.peft
    if cfg is None:
        return None, None, 0
    lora = cfg.alpha / cfg.rank if cfg.strategy == "lora" else None
    adapter = cfg.adapter_scale if cfg.strategy == "mlp-adapter" else None
    prompts = cfg.tokens_per_block if cfg.strategy == "prompt-tuning" else 0
    return lora, adapter, prompts


def embed_pseudo_rgb(model: Model, image: Tensor) -> Tensor:
    """Run a 3-channel image through the model's own patch embedding + positions."""
    p = model.config.patch_size
    grid = model.config.grid
    emb = image.conv2d(model.param("encoder.patch_embed.weight").tensor,
                       model.param("encoder.patch_embed.bias").tensor,
                       stride=p, padding=0)
    tokens = emb.reshape(model.config.embed_dim, grid * grid).transpose(1, 0)
    return tokens + model.param("encoder.pos_embed").tensor


def patch_embed(model: Model, image: Tensor) -> Tensor:
    """Embed a [3,H,W] image into the [(H/P)^2, D] token grid."""
    if image.data.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(
            f"patch_embed expects channel axis of size 3, got shape {image.shape}; "
            "route other channel counts through a MAT layer")
    s = model.config.image_size
    if image.shape[1] != s or image.shape[2] != s:
        raise DimensionError(
            f"patch_embed expects spatial size {s}x{s}, got {image.shape[1]}x{image.shape[2]}")
    return embed_pseudo_rgb(model, image)


def encode_tokens(model: Model, tokens: Tensor) -> Tensor:
    """Transformer trunk: depth blocks plus the final layernorm (no neck)."""
    lora, adapter, n_prompt = _injection_scales(model)
    x = tokens
    for i in range(model.config.depth):
        block = model.local_params(f"encoder.block{i}")
        if n_prompt:
            x = concat([block["prompt_tokens"].tensor, x], axis=0)
        x = attention_block(x, block, model.config.heads,
                            lora_scale=lora, adapter_scale=adapter)
        if n_prompt:
            x = x[n_prompt:]
    norm = model.local_params("encoder.norm")
    return x.layernorm(norm["gamma"].tensor, norm["beta"].tensor)


def apply_neck(model: Model, hidden: Tensor) -> Tensor:
    return linear(hidden, model.param("encoder.neck.weight"),
                  model.param("encoder.neck.bias"))


def encode_image(model: Model, tokens: Tensor) -> Tensor:
    """Tokens -> per-token image embedding at decoder width."""
    return apply_neck(model, encode_tokens(model, tokens))


def fourier_features(model: Model, point: PromptPoint) -> np.ndarray:
    """Random-Fourier features of the normalized click position."""
    s = model.config.image_size
    uv = np.array([(point.col + 0.5) / s, (point.row + 0.5) / s], dtype=np.float32)
    angles = np.float32(2.0 * math.pi) * (model.buffers["prompt.fourier_freqs"] @ uv)
    return np.concatenate([np.cos(angles), np.sin(angles)]).astype(np.float32)


def encode_prompt(model: Model, point: PromptPoint) -> Tensor:
    """Embed one click prompt to a [1, decoder_dim] token."""
    s = model.config.image_size
    if not (0 <= point.row < s and 0 <= point.col < s):
        raise InputError(f"prompt point ({point.row}, {point.col}) outside {s}x{s} image")
    pos = Tensor(fourier_features(model, point).reshape(1, -1))
    label_row = model.param("prompt.label_embed").tensor[int(bool(point.label)):int(bool(point.label)) + 1, :]
    feat = concat([pos, label_row], axis=1)
    return linear(feat, model.param("prompt.proj.weight"), model.param("prompt.proj.bias"))


def _decoder_block(model: Model, idx: int, queries: Tensor, img: Tensor):
    p = model.local_params(f"decoder.block{idx}")
    heads = model.config.decoder_heads

    qn = queries.layernorm(p["norm1.gamma"].tensor, p["norm1.beta"].tensor)
    queries = queries + multihead_attention(p, "self_attn", qn, qn, heads)

    qn = queries.layernorm(p["norm2.gamma"].tensor, p["norm2.beta"].tensor)
    queries = queries + multihead_attention(p, "cross_q", qn, img, heads)

    qn = queries.layernorm(p["norm3.gamma"].tensor, p["norm3.beta"].tensor)
    queries = queries + mlp(p, "mlp", qn)

    im = img.layernorm(p["norm4.gamma"].tensor, p["norm4.beta"].tensor)
    img = img + multihead_attention(p, "cross_i", im, queries, heads)
    return queries, img


def decode_mask(model: Model, embedding: Tensor, prompt_tokens: Tensor) -> Tensor:
    """Two-way decoding of image embedding + prompts into [H, W] mask logits."""
    cfg = model.config
    queries = concat([model.param("decoder.mask_token").tensor, prompt_tokens], axis=0)
    img = embedding + model.param("decoder.pos_embed").tensor
    for i in range(cfg.decoder_depth):
        queries, img = _decoder_block(model, i, queries, img)

    norm = model.local_params("decoder.norm_img")
    img = img.layernorm(norm["gamma"].tensor, norm["beta"].tensor)
    grid = cfg.grid
    feat = img.transpose(1, 0).reshape(cfg.decoder_dim, grid, grid)
    f1, f2 = cfg.upscale_factors()
    feat = feat.conv_transpose2d(model.param("decoder.upscale1.weight").tensor,
                                 model.param("decoder.upscale1.bias").tensor, factor=f1)
    feat = feat.gelu()
    feat = feat.conv_transpose2d(model.param("decoder.upscale2.weight").tensor,
                                 model.param("decoder.upscale2.bias").tensor, factor=f2)
    hyper = linear(queries[0:1, :], model.param("decoder.hyper.weight"),
                   model.param("decoder.hyper.bias"))
    s = cfg.image_size
    logits = hyper @ feat.reshape(cfg.decoder_dim // 4, s * s)
    return logits.reshape(s, s)


def forward(model: Model, image: Tensor, point: PromptPoint) -> Tensor:
    """Plain 3-channel forward: embed, encode, decode one prompted mask."""
    tokens = patch_embed(model, image)
    return decode_mask(model, encode_image(model, tokens), encode_prompt(model, point))


def simmat_forward(x: Tensor, mat, model: Model, point: PromptPoint) -> Tensor:
    """Transfer composition: MAT layer in front of the frozen-geometry encoder.

    `mat=None` is the pass-through path and must match `forward` bit for bit.
    The channel-to-batch variant runs the encoder trunk inside the MAT layer,
    so only the neck remains before decoding.
    """
    from ..mat import TRANSPOSE_TO_BATCH, mat_forward  # deferred: mat imports model

    prompt = encode_prompt(model, point)
    if mat is None:
        embedding = encode_image(model, patch_embed(model, x))
    elif mat.config.variant == TRANSPOSE_TO_BATCH:
        embedding = apply_neck(model, mat_forward(mat, x))
    else:
        embedding = encode_image(model, mat_forward(mat, x))
    return decode_mask(model, embedding, prompt)
