"""Sample resizing: bilinear for image channels, nearest for masks.

Bilinear interpolation uses half-pixel centers and the lerp form
a + f*(b - a), so an identity resize is bit-exact and constant channels
survive exactly.
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from ..errors import InputError
from .instances import center_point
from .types import InstanceSample

__all__ = ["bilinear_resize", "nearest_resize", "resize_sample"]

log = logging.getLogger(__name__)


def _source_coords(out_size: int, in_size: int) -> Tuple[np.ndarray, np.ndarray]:
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float32) + np.float32(0.5)) * np.float32(scale) \
        - np.float32(0.5)
    lo = np.floor(src).astype(np.int64)
    frac = (src - lo).astype(np.float32)
    return lo, frac


def bilinear_resize(image: np.ndarray, size: int) -> np.ndarray:
    """Resize [C,H,W] (or [H,W]) float data to size x size."""
    squeeze = image.ndim == 2
    arr = image[None] if squeeze else image
    c, h, w = arr.shape
    ry, fy = _source_coords(size, h)
    rx, fx = _source_coords(size, w)
    y0 = np.clip(ry, 0, h - 1)
    y1 = np.clip(ry + 1, 0, h - 1)
    x0 = np.clip(rx, 0, w - 1)
    x1 = np.clip(rx + 1, 0, w - 1)

    arr = arr.astype(np.float32, copy=False)
    top = arr[:, y0[:, None], x0[None, :]]
    top = top + fx[None, None, :] * (arr[:, y0[:, None], x1[None, :]] - top)
    bot = arr[:, y1[:, None], x0[None, :]]
    bot = bot + fx[None, None, :] * (arr[:, y1[:, None], x1[None, :]] - bot)
    out = top + fy[None, :, None] * (bot - top)
    return out[0] if squeeze else out


def nearest_resize(mask: np.ndarray, size: int) -> np.ndarray:
    h, w = mask.shape
    ys = np.minimum(((np.arange(size) + 0.5) * (h / size)).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(size) + 0.5) * (w / size)).astype(np.int64), w - 1)
    return mask[ys[:, None], xs[None, :]]


def resize_sample(sample: InstanceSample, size: int) -> InstanceSample:
    """Resize a sample; prompts are re-derived as each resized mask's pole.

    Instances whose masks vanish at the new size are dropped (logged with a
    count).
    """
    if size < 1:
        raise InputError(f"target size must be positive, got {size}")
    modality = bilinear_resize(sample.modality, size)
    rgb = bilinear_resize(sample.rgb, size) if sample.rgb is not None else None
    instances = []
    prompts = []
    dropped = 0
    for mask in sample.instances:
        small = nearest_resize(mask, size)
        if not small.any():
            dropped += 1
            continue
        instances.append(small)
        prompts.append(center_point(small))
    if dropped:
        log.warning("resize to %d dropped %d empty instance(s)", size, dropped)
    return InstanceSample(modality=modality, instances=instances, prompts=prompts, rgb=rgb)
