"""Transformer building blocks over the autodiff substrate.

A block is driven by a flat mapping of local parameter names ("attn.q.weight",
"norm1.gamma", ...). Optional low-rank factors ("attn.q.lora_A"/"lora_B") and
bottleneck adapters ("adapter.down.weight", ...) are picked up by key presence,
so injected and plain models share one forward path.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional

from ..errors import ConfigurationError
from .params import Parameter
from .tensor import Tensor, concat

__all__ = ["linear", "multihead_attention", "mlp", "attention_block"]


def linear(x: Tensor, weight: Parameter, bias: Optional[Parameter] = None) -> Tensor:
    """x [N, in] times weight [out, in], plus bias."""
    y = x @ weight.tensor.transpose(1, 0)
    if bias is not None:
        y = y + bias.tensor
    return y


def _proj(p: Mapping[str, Parameter], prefix: str, x: Tensor,
          lora_scale: Optional[float]) -> Tensor:
    y = linear(x, p[f"{prefix}.weight"], p[f"{prefix}.bias"])
    a = p.get(f"{prefix}.lora_A")
    if a is not None and lora_scale is not None:
        b = p[f"{prefix}.lora_B"]
        y = y + (x @ a.tensor.transpose(1, 0)) @ b.tensor.transpose(1, 0) * lora_scale
    return y


def multihead_attention(p: Mapping[str, Parameter], prefix: str,
                        q_tokens: Tensor, kv_tokens: Tensor, heads: int,
                        lora_scale: Optional[float] = None) -> Tensor:
    """Multi-head attention of q_tokens over kv_tokens.

    Low-rank updates, when present under `prefix`, apply to the query and
    value projections.
    """
    nq, dim = q_tokens.shape
    nk = kv_tokens.shape[0]
    if dim % heads != 0:
        raise ConfigurationError(f"token dim {dim} not divisible by head count {heads}")
    hd = dim // heads

    q = _proj(p, f"{prefix}.q", q_tokens, lora_scale)
    k = linear(kv_tokens, p[f"{prefix}.k.weight"], p[f"{prefix}.k.bias"])
    v = _proj(p, f"{prefix}.v", kv_tokens, lora_scale)

    q = q.reshape(nq, heads, hd).transpose(1, 0, 2)
    k = k.reshape(nk, heads, hd).transpose(1, 0, 2)
    v = v.reshape(nk, heads, hd).transpose(1, 0, 2)

    scores = q @ k.transpose(0, 2, 1) * (1.0 / math.sqrt(hd))
    attn = scores.softmax(axis=-1)
    out = (attn @ v).transpose(1, 0, 2).reshape(nq, dim)
    return linear(out, p[f"{prefix}.proj.weight"], p[f"{prefix}.proj.bias"])


def mlp(p: Mapping[str, Parameter], prefix: str, x: Tensor, act: str = "gelu") -> Tensor:
    h = linear(x, p[f"{prefix}.fc1.weight"], p[f"{prefix}.fc1.bias"])
    h = h.gelu() if act == "gelu" else h.relu()
    return linear(h, p[f"{prefix}.fc2.weight"], p[f"{prefix}.fc2.bias"])


def attention_block(tokens: Tensor, p: Mapping[str, Parameter], heads: int,
                    lora_scale: Optional[float] = None,
                    adapter_scale: Optional[float] = None) -> Tensor:
    """Pre-norm encoder block: LN -> MHSA -> residual -> LN -> MLP -> residual.

    An adapter branch, when present, runs in parallel with the MLP on the same
    normalized input and is added to the residual stream scaled by
    `adapter_scale`.
    """
    xn = tokens.layernorm(p["norm1.gamma"].tensor, p["norm1.beta"].tensor)
    h = tokens + multihead_attention(p, "attn", xn, xn, heads, lora_scale)

    hn = h.layernorm(p["norm2.gamma"].tensor, p["norm2.beta"].tensor)
    out = h + mlp(p, "mlp", hn)
    down = p.get("adapter.down.weight")
    if down is not None and adapter_scale is not None:
        branch = linear(hn, down, p["adapter.down.bias"]).relu()
        branch = linear(branch, p["adapter.up.weight"], p["adapter.up.bias"])
        out = out + branch * adapter_scale
    return out
