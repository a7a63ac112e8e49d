"""Core raster and geometry types shared across pipeline stages."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ErrorCode, InspectionError

# Fixed luma weights keep gray conversion deterministic across platforms.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class ImageMeta:
    image_id: str = ""
    product_id: str = ""
    layer_id: str = ""
    captured_at: str = ""


@dataclass
class InspectionImage:
    """One inspection raster: gray (H, W) or RGB (H, W, 3), 8-bit."""

    pixels: np.ndarray
    meta: ImageMeta = field(default_factory=ImageMeta)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise InspectionError(ErrorCode.SPEC_INVALID, "pixels must be HxW or HxWx3")
        if px.shape[0] < 2 or px.shape[1] < 2:
            raise InspectionError(ErrorCode.SPEC_INVALID, "image must be at least 2x2")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def gray(self) -> np.ndarray:
        """Deterministic luma gray: round(0.299 R + 0.587 G + 0.114 B), float64."""
        if self.pixels.ndim == 2:
            return self.pixels.astype(np.float64)
        return np.round(self.pixels.astype(np.float64) @ _LUMA)


@dataclass(frozen=True)
class PatchBox:
    """Axis-aligned patch on the 224 grid (224 or 448 per side)."""

    x: int
    y: int
    width: int = 224
    height: int = 224

    def __post_init__(self):
        if self.width not in (224, 448) or self.height not in (224, 448):
            raise InspectionError(
                ErrorCode.SPEC_INVALID, f"patch dims must be 224/448, got {self.width}x{self.height}"
            )

    @property
    def x2(self) -> int:
        return self.x + self.width

    @property
    def y2(self) -> int:
        return self.y + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x2 and self.y <= py < self.y2

    def intersects(self, other: "PatchBox") -> bool:
        return not (
            self.x2 <= other.x or other.x2 <= self.x or self.y2 <= other.y or other.y2 <= self.y
        )

    def iou(self, other: "PatchBox") -> float:
        ix = max(0, min(self.x2, other.x2) - max(self.x, other.x))
        iy = max(0, min(self.y2, other.y2) - max(self.y, other.y))
        inter = ix * iy
        union = self.width * self.height + other.width * other.height - inter
        return inter / union if union else 0.0

    def crop(self, pixels: np.ndarray) -> np.ndarray:
        return pixels[self.y : self.y2, self.x : self.x2]

    def in_bounds(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height
