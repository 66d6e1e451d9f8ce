"""Differentiable compute substrate: tensors, blocks, Adam, gradient checks."""

from .blocks import attention_block, linear, mlp, multihead_attention
from .gradcheck import grad_check
from .optim import AdamState, Schedule, adam_step, lr_at_epoch
from .params import ParamDict, Parameter, init_array, make_parameter, seed_for
from .tensor import Tensor, as_f32, concat, stack_rows

__all__ = [
    "Tensor", "as_f32", "concat", "stack_rows",
    "Parameter", "ParamDict", "make_parameter", "init_array", "seed_for",
    "AdamState", "adam_step", "Schedule", "lr_at_epoch",
    "grad_check",
    "attention_block", "multihead_attention", "linear", "mlp",
]
