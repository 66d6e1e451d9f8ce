"""Data carriers for benchmark samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..model.forward import PromptPoint

__all__ = ["InstanceSample"]


@dataclass
class InstanceSample:
    """One C-channel image with its promptable instances.

    Instance masks are mutually disjoint (later shapes occlude earlier ones at
    generation time) and each prompt point lies inside its mask.
    """

    modality: np.ndarray                 # [C, H, W] float32
    instances: List[np.ndarray]          # boolean [H, W] masks
    prompts: List[PromptPoint]
    rgb: Optional[np.ndarray] = None     # [3, H, W] float32, when available

    @property
    def channels(self) -> int:
        return int(self.modality.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.modality.shape[1])
