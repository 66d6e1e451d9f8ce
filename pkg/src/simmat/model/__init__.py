"""The promptable segmentation foundation model and its persistence."""

from .build import (Model, build_model, count_params, count_plan, freeze_all,
                    param_plan)
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .config import DESK, GRADCHECK_32PX, VITB_LIKE, ModelConfig
from .forward import (PromptPoint, apply_neck, decode_mask, embed_pseudo_rgb,
                      encode_image, encode_prompt, encode_tokens, forward,
                      patch_embed, simmat_forward)

__all__ = [
    "ModelConfig", "DESK", "VITB_LIKE", "GRADCHECK_32PX",
    "Model", "build_model", "param_plan", "count_params", "count_plan", "freeze_all",
    "PromptPoint", "patch_embed", "embed_pseudo_rgb", "encode_tokens", "apply_neck",
    "encode_image", "encode_prompt", "decode_mask", "forward", "simmat_forward",
    "save_checkpoint", "load_checkpoint", "load_into",
]
