"""Architecture hyperparameters for the promptable segmentation model."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigurationError

__all__ = ["ModelConfig", "DESK", "VITB_LIKE", "GRADCHECK_32PX"]

# the decoder runs multi-head attention at a fixed 8-wide head
DECODER_HEAD_DIM = 8
# expansion factor of the decoder MLP sublayer
DECODER_MLP_RATIO = 4


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    decoder_dim: int = 32
    decoder_depth: int = 2
    fourier_bands: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        items = asdict(self)
        for key, value in items.items():
            if value <= 0:
                raise ConfigurationError(f"{key} must be positive, got {value}")
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads != 0:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.decoder_dim % (2 * DECODER_HEAD_DIM) != 0:
            raise ConfigurationError(
                f"decoder_dim {self.decoder_dim} must be a multiple of {2 * DECODER_HEAD_DIM}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def token_count(self) -> int:
        return self.grid * self.grid

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    @property
    def decoder_heads(self) -> int:
        return self.decoder_dim // DECODER_HEAD_DIM

    def upscale_factors(self) -> tuple:
        """Split patch_size into the two transposed-convolution factors."""
        p = self.patch_size
        if p % 2 == 0:
            return (p // 2, 2)
        return (p, 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


# Desk-scale default: small enough to train on a CPU in minutes.
DESK = ModelConfig()

# ViT-Base-shaped encoder dims; used shape-only (census / accounting), never trained here.
VITB_LIKE = ModelConfig(image_size=1024, patch_size=16, embed_dim=768, depth=12,
                        heads=12, mlp_ratio=4.0, decoder_dim=256, decoder_depth=2,
                        fourier_bands=64)

# Tiny config for end-to-end finite-difference checks.
GRADCHECK_32PX = ModelConfig(image_size=32, patch_size=8, embed_dim=32, depth=2,
                             heads=2, mlp_ratio=2.0, decoder_dim=16, decoder_depth=1,
                             fourier_bands=4)
