"""
Image loading, validation and resampling.

Images are uint8 arrays of shape (height, width, 3). PNG and PPM inputs are
read through Pillow; grayscale and RGBA inputs are converted to RGB.
"""

import logging
from pathlib import Path
from typing import Iterable, List

import numpy as np
from PIL import Image, UnidentifiedImageError

from common.errors import DomainError, FormatError

logger = logging.getLogger(__name__)

MIN_IMAGE_SIDE = 8
IMAGE_SUFFIXES = (".png", ".ppm")


def as_image(array) -> np.ndarray:
    """Validate an RGB image tensor and return it as uint8 (H, W, 3)."""
    image = np.asarray(array)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DomainError(f"expected an (H, W, 3) RGB image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise DomainError(f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}")
    if image.dtype != np.uint8:
        if not np.issubdtype(image.dtype, np.number) or np.issubdtype(image.dtype, np.complexfloating):
            raise DomainError(f"image channels must be real numbers, got dtype {image.dtype}")
        if not np.all(np.isfinite(image)):
            raise DomainError("image contains non-finite channel values")
        if np.any(image < 0) or np.any(image > 255):
            raise DomainError("channel values must lie in [0, 255]")
        # float channels round to the nearest level
        image = np.rint(image).astype(np.uint8)
    return image


def load_image(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise FormatError(f"{path}: unreadable image ({e})") from e
    return as_image(np.array(rgb, dtype=np.uint8))


def save_image(path: Path, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(as_image(image)).save(path)


def list_images(folder: Path) -> List[Path]:
    """Image files of a folder in sorted order."""
    folder = Path(folder)
    if not folder.exists():
        raise FileNotFoundError(f"Image folder not found at {folder}")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def image_id_for(path: Path) -> str:
    return Path(path).stem


def resize_bicubic(image: np.ndarray, size: int) -> np.ndarray:
    """Bicubic resize of an RGB image to size x size."""
    img = Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8))
    return np.array(img.resize((size, size), resample=Image.Resampling.BICUBIC), dtype=np.uint8)


def resize_box(image: np.ndarray, size: int) -> np.ndarray:
    """Area-averaging downsample to size x size (float channels in [0, 255])."""
    h, w = image.shape[:2]
    if h == size and w == size:
        return image.astype(float)
    if h % size == 0 and w % size == 0:
        # whole blocks: a plain block mean
        return image.reshape(size, h // size, size, w // size, 3).astype(float).mean(axis=(1, 3))
    channels = []
    for c in range(3):
        plane = Image.fromarray(np.ascontiguousarray(image[:, :, c], dtype=np.float32))
        channels.append(np.array(plane.resize((size, size), resample=Image.Resampling.BOX), dtype=float))
    return np.stack(channels, axis=-1)


def load_images(paths: Iterable[Path]) -> dict:
    return {image_id_for(p): load_image(p) for p in paths}
