"""Procedural multi-channel scenes with instance masks and click prompts.

Each scene renders (a) an RGB image of shaded shapes over a noisy background,
(b) a C-channel modality produced by pushing per-pixel latent features
(material vector, a surface-normal proxy, noise) through a fixed seeded
nonlinear map tanh(M2 . relu(M1 . phi)), and (c) disjoint instance masks with
pole-of-inaccessibility prompts. The nonlinear map makes the modality
informative about the scene without being any linear recombination of the RGB
channels.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..diffcore import seed_for
from ..errors import ConfigurationError, DimensionError, GenerationError
from .instances import center_point
from .resize import bilinear_resize
from .types import InstanceSample

__all__ = ["SceneSpec", "synth_scene", "make_pseudo_modality", "material_palette"]

_MIX_HIDDEN = 16


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    image_size: int = 64
    shape_count: Tuple[int, int] = (2, 4)
    shape_kinds: Tuple[str, ...] = ("ellipse", "polygon")
    channels: int = 9
    modality_kind: str = "mixed"     # "mixed" nonlinear render, or "rgb" passthrough
    material_count: int = 8
    material_feature_dim: int = 4
    mixing_seed: int = 0
    min_instance_pixels: int = 16
    max_retries: int = 25

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.image_size < 16:
            raise ConfigurationError("image_size must be >= 16")
        if self.channels < 1:
            raise ConfigurationError(f"channels must be >= 1, got {self.channels}")
        lo, hi = self.shape_count
        if not 1 <= lo <= hi:
            raise ConfigurationError(f"bad shape_count range {self.shape_count}")
        bad = [k for k in self.shape_kinds if k not in ("ellipse", "polygon")]
        if bad or not self.shape_kinds:
            raise ConfigurationError(f"unknown shape kinds {bad}")
        if self.modality_kind not in ("mixed", "rgb"):
            raise ConfigurationError(f"unknown modality_kind {self.modality_kind!r}")
        if self.modality_kind == "rgb" and self.channels != 3:
            raise ConfigurationError("modality_kind 'rgb' requires channels == 3")
        if self.material_count < 2:
            raise ConfigurationError("need at least 2 materials")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        data = dict(data)
        data["shape_count"] = tuple(data.get("shape_count", (2, 4)))
        data["shape_kinds"] = tuple(data.get("shape_kinds", ("ellipse", "polygon")))
        return cls(**data)


def material_palette(spec: SceneSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(base_rgb [M,3], features [M,F], background feature [F]) from the mixing seed."""
    rng = np.random.default_rng(seed_for(spec.mixing_seed, "material-palette"))
    hues = rng.permutation(spec.material_count) / spec.material_count
    base = np.stack([_hsv_to_rgb(h, 0.55 + 0.4 * rng.random(), 0.55 + 0.4 * rng.random())
                     for h in hues]).astype(np.float32)
    feats = rng.standard_normal((spec.material_count, spec.material_feature_dim))
    feats = feats.astype(np.float32)
    background = (rng.standard_normal(spec.material_feature_dim) * 0.25).astype(np.float32)
    return base, feats, background


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb, dtype=np.float32)


def _ellipse_mask(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[float, float], float]:
    a = rng.uniform(size / 10, size / 4)
    b = rng.uniform(size / 10, size / 4)
    ext = max(a, b)
    cy = rng.uniform(ext + 1, size - ext - 2)
    cx = rng.uniform(ext + 1, size - ext - 2)
    theta = rng.uniform(0, math.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy - cy, xx - cx
    ct, st = math.cos(theta), math.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return mask, (cy, cx), ext


def _polygon_mask(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[float, float], float]:
    nv = int(rng.integers(3, 7))
    base_r = rng.uniform(size / 8, size / 4)
    radii = base_r * rng.uniform(0.65, 1.3, size=nv)
    ext = radii.max()
    cy = rng.uniform(ext + 1, size - ext - 2)
    cx = rng.uniform(ext + 1, size - ext - 2)
    rot = rng.uniform(0, 2 * math.pi)
    angles = rot + 2 * math.pi * np.arange(nv) / nv
    vy = cy + radii * np.sin(angles)
    vx = cx + radii * np.cos(angles)
    yy, xx = np.mgrid[0:size, 0:size]
    inside = np.zeros((size, size), dtype=bool)
    j = nv - 1
    for i in range(nv):  # even-odd rule over pixel centers
        cond = (vy[i] > yy) != (vy[j] > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = (vx[j] - vx[i]) * (yy - vy[i]) / (vy[j] - vy[i]) + vx[i]
        inside ^= cond & (xx < x_cross)
        j = i
    return inside, (cy, cx), ext


def _background_rgb(size: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(0.05, 0.35, size=(3, 4, 4)).astype(np.float32)
    smooth = bilinear_resize(coarse, size)
    noise = rng.standard_normal((3, size, size)).astype(np.float32) * np.float32(0.02)
    return np.clip(smooth + noise, 0.0, 1.0)


def _render_once(spec: SceneSpec, seed: int) -> Optional[InstanceSample]:
    rng = np.random.default_rng(seed)
    size = spec.image_size
    base_rgb, mat_feats, bg_feat = material_palette(spec)

    count = int(rng.integers(spec.shape_count[0], spec.shape_count[1] + 1))
    shapes = []
    for _ in range(count):
        kind = spec.shape_kinds[int(rng.integers(len(spec.shape_kinds)))]
        mask, center, ext = (_ellipse_mask if kind == "ellipse" else _polygon_mask)(size, rng)
        material = int(rng.integers(spec.material_count))
        shapes.append((mask, center, ext, material))
        if mask.sum() < spec.min_instance_pixels:
            return None

    # later shapes occlude earlier ones; every visible part must stay substantial
    visible: List[np.ndarray] = []
    for i, (mask, _, _, _) in enumerate(shapes):
        occluders = np.zeros((size, size), dtype=bool)
        for other, _, _, _ in shapes[i + 1:]:
            occluders |= other
        vis = mask & ~occluders
        if vis.sum() < spec.min_instance_pixels:
            return None
        visible.append(vis)

    rgb = _background_rgb(size, rng)
    yy, xx = np.mgrid[0:size, 0:size]
    feat_map = np.zeros((spec.material_feature_dim, size, size), dtype=np.float32)
    feat_map += bg_feat[:, None, None]
    normal = np.zeros((2, size, size), dtype=np.float32)
    height = np.zeros((size, size), dtype=np.float32)

    for mask, (cy, cx), ext, material in shapes:
        dy = ((yy - cy) / ext).astype(np.float32)
        dx = ((xx - cx) / ext).astype(np.float32)
        r2 = np.clip(dy * dy + dx * dx, 0.0, 1.0).astype(np.float32)
        shade = (1.0 - 0.35 * r2).astype(np.float32)
        for ch in range(3):
            rgb[ch][mask] = base_rgb[material, ch] * shade[mask]
        feat_map[:, mask] = mat_feats[material][:, None]
        normal[0][mask] = dy[mask]
        normal[1][mask] = dx[mask]
        height[mask] = (1.0 - r2)[mask]
    rgb += rng.standard_normal(rgb.shape).astype(np.float32) * np.float32(0.015)
    rgb = np.clip(rgb, 0.0, 1.0).astype(np.float32)

    if spec.modality_kind == "rgb":
        modality = rgb.copy()
    else:
        grain = rng.standard_normal((1, size, size)).astype(np.float32) * np.float32(0.5)
        phi = np.concatenate([feat_map, normal, height[None], grain], axis=0)
        f_dim = phi.shape[0]
        mix_rng = np.random.default_rng(seed_for(spec.mixing_seed, "modality-mix"))
        m1 = (mix_rng.standard_normal((_MIX_HIDDEN, f_dim)) * (2.0 / math.sqrt(f_dim))
              ).astype(np.float32)
        m2 = (mix_rng.standard_normal((spec.channels, _MIX_HIDDEN))
              * (2.0 / math.sqrt(_MIX_HIDDEN))).astype(np.float32)
        flat = phi.reshape(f_dim, size * size)
        hidden = np.maximum(m1 @ flat, 0.0)
        modality = np.tanh(m2 @ hidden).reshape(spec.channels, size, size)
        modality += rng.standard_normal(modality.shape).astype(np.float32) * np.float32(0.01)
        modality = modality.astype(np.float32)

    prompts = [center_point(v) for v in visible]
    return InstanceSample(modality=modality, instances=visible, prompts=prompts, rgb=rgb)


def synth_scene(spec: SceneSpec) -> InstanceSample:
    """Render a scene deterministically; bounded retries reseed degenerate draws."""
    for attempt in range(spec.max_retries):
        sample = _render_once(spec, seed_for(spec.seed, f"scene-attempt{attempt}"))
        if sample is not None:
            return sample
    raise GenerationError(
        f"could not place {spec.shape_count} shapes of >= {spec.min_instance_pixels} "
        f"visible pixels in {spec.max_retries} attempts (seed {spec.seed})")


def make_pseudo_modality(rgb: np.ndarray, x: np.ndarray, seed: int
                         ) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenate RGB with另 a modality and shuffle channels with a seeded permutation.

    Returns (shuffled [C+3,H,W], permutation) where out[i] = concat[perm[i]];
    the permutation is kept for audit and never fed to the model.
    """
    rgb = np.asarray(rgb, dtype=np.float32)
    x = np.asarray(x, dtype=np.float32)
    if rgb.ndim != 3 or x.ndim != 3 or rgb.shape[1:] != x.shape[1:]:
        raise DimensionError(
            f"spatial shapes must match: rgb {rgb.shape} vs modality {x.shape}")
    if rgb.shape[0] != 3:
        raise DimensionError(f"rgb input must have 3 channels, got {rgb.shape[0]}")
    stacked = np.concatenate([rgb, x], axis=0)
    perm = np.random.default_rng(seed).permutation(stacked.shape[0])
    return stacked[perm].copy(), perm
