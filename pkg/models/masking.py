"""
Masking policies: how a removed segment is painted.

A policy is resolved once against the image being explained; mean_color then
carries that image's rounded mean colour, so repeated masking of the same
image always uses the same fill.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from common.errors import DomainError, PreconditionError


class MaskMode(str, Enum):
    ZERO = "zero"
    MEAN_COLOR = "mean_color"
    CONSTANT = "constant"


RGB = Tuple[int, int, int]


@dataclass(frozen=True)
class MaskingPolicy:
    mode: MaskMode = MaskMode.MEAN_COLOR
    rgb: Optional[RGB] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", MaskMode(self.mode))
        if self.mode == MaskMode.CONSTANT and self.rgb is None:
            raise DomainError("constant masking needs an rgb fill")
        if self.rgb is not None:
            if len(self.rgb) != 3 or any(c < 0 or c > 255 for c in self.rgb):
                raise DomainError(f"fill colour must be three values in [0, 255], got {self.rgb}")
            object.__setattr__(self, "rgb", tuple(int(c) for c in self.rgb))

    @classmethod
    def zero(cls) -> "MaskingPolicy":
        return cls(MaskMode.ZERO)

    @classmethod
    def mean_color(cls) -> "MaskingPolicy":
        return cls(MaskMode.MEAN_COLOR)

    @classmethod
    def constant(cls, rgb: RGB) -> "MaskingPolicy":
        return cls(MaskMode.CONSTANT, tuple(rgb))

    @classmethod
    def from_name(cls, name: str) -> "MaskingPolicy":
        name = name.lower()
        if name == "zero":
            return cls.zero()
        if name in ("mean", "mean_color"):
            return cls.mean_color()
        raise DomainError(f"unknown masking policy {name!r}; expected 'zero' or 'mean'")

    @property
    def resolved(self) -> bool:
        return self.mode == MaskMode.ZERO or self.rgb is not None

    def resolve(self, image: np.ndarray) -> "MaskingPolicy":
        """Fix the fill colour against an image (no-op when already fixed)."""
        if self.resolved:
            return self
        mean = np.round(image.reshape(-1, 3).astype(float).mean(axis=0))
        return MaskingPolicy(MaskMode.MEAN_COLOR, tuple(int(c) for c in mean))

    def fill(self) -> np.ndarray:
        if not self.resolved:
            raise PreconditionError("mean_color policy has no fill yet; resolve it against the source image first")
        if self.mode == MaskMode.ZERO:
            return np.zeros(3, dtype=np.uint8)
        return np.asarray(self.rgb, dtype=np.uint8)

    def describe(self) -> str:
        if self.mode == MaskMode.ZERO:
            return "zero"
        return f"{self.mode.value}{list(self.rgb) if self.rgb else ''}"


def mask_pixels(image: np.ndarray, pixels: np.ndarray, policy: MaskingPolicy) -> np.ndarray:
    """Replace the pixels selected by a boolean (H, W) mask with the fill of a resolved policy."""
    fill = policy.fill()
    out = image.copy()
    if pixels.any():
        out[pixels] = fill
    return out


def mask(
    image: np.ndarray,
    labels: np.ndarray,
    remove: Iterable[int],
    policy: MaskingPolicy,
) -> np.ndarray:
    """
    Remove segments of a label map from an image; other pixels stay byte-identical.

    The policy must already be resolved against the source image, which makes
    masking idempotent: mask(mask(x, S), S) == mask(x, S).
    """
    if not policy.resolved:
        raise PreconditionError("mask needs a policy resolved against the source image")
    remove = sorted(set(int(r) for r in remove))
    if not remove:
        return image.copy()
    segment_count = int(labels.max()) + 1
    unknown = [r for r in remove if r < 0 or r >= segment_count]
    if unknown:
        raise DomainError(f"unknown segment ids {unknown} (map has {segment_count} segments)")
    return mask_pixels(image, np.isin(labels, remove), policy)
