"""Instance decomposition and click-point selection.

Semantic label maps are split into 4-connected components per class, each
component becoming one promptable instance. The click for an instance is its
pole of inaccessibility: the interior pixel maximizing L1 distance to the
nearest non-mask pixel (pixels outside the canvas count as background), with
ties broken by smallest row, then smallest column, so prompts are
deterministic and always lie inside the mask.
"""

from __future__ import annotations

from typing import List

import numpy as np
from scipy import ndimage

from ..errors import InputError
from ..model.forward import PromptPoint

__all__ = ["semantic_to_instances", "center_point"]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def semantic_to_instances(semantic: np.ndarray) -> List[np.ndarray]:
    """Split a semantic map (0 = background) into per-instance boolean masks.

    Ordering is deterministic: ascending class label, then row-major position
    of each component's first pixel.
    """
    semantic = np.asarray(semantic)
    if semantic.ndim != 2:
        raise InputError(f"semantic map must be 2-D, got shape {semantic.shape}")
    instances: List[np.ndarray] = []
    for label in sorted(int(v) for v in np.unique(semantic) if v > 0):
        labeled, count = ndimage.label(semantic == label, structure=_FOUR_CONNECTED)
        components = []
        for comp in range(1, count + 1):
            mask = labeled == comp
            first = int(np.flatnonzero(mask.ravel())[0])
            components.append((first, mask))
        components.sort(key=lambda pair: pair[0])
        instances.extend(mask for _, mask in components)
    return instances


def center_point(mask: np.ndarray) -> PromptPoint:
    """Pole of inaccessibility of a boolean mask under the L1 metric."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise InputError(f"mask must be 2-D, got shape {mask.shape}")
    if not mask.any():
        raise InputError("cannot place a prompt in an empty mask")
    padded = np.pad(mask, 1)  # border counts as background
    dist = ndimage.distance_transform_cdt(padded, metric="taxicab")[1:-1, 1:-1]
    best = dist.max()
    rows, cols = np.nonzero(dist == best)
    row, col = int(rows[0]), int(cols[0])  # nonzero is row-major: smallest row, then col
    return PromptPoint(row=row, col=col, label=True)
