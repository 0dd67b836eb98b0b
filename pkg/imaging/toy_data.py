"""
Colored-blob toy dataset: each image is a lightly noisy gray square with one
disc in its class colour. The class is decided by the blob alone.

Every class holds exactly two concepts (its blob and the gray background), so
the dataset ships a run.json that clusters into two concepts per class and
keeps the neighborhood small enough for a quick full run.
"""

import json
import logging
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from imaging.dataset import Dataset, ImageRecord, write_labels
from imaging.image_io import save_image
from models.toy_models import BACKGROUND_GRAY, CLASS_COLORS, CLASS_NAMES

logger = logging.getLogger(__name__)

TOY_IMAGE_SIZE = 40
TOY_IMAGES_PER_CLASS = 40
TOY_RADIUS_RANGE = (7, 9)
TOY_NOISE = 6
TOY_RUN_CONFIG = {"k": 3, "M": 1, "clusters": 2, "top_k": 2}


def image_rng(seed: int, class_id: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(class_id, index))))


def draw_blob_image(
    rng: np.random.Generator,
    color: Tuple[int, int, int],
    size: int = TOY_IMAGE_SIZE,
    radius_range: Tuple[int, int] = TOY_RADIUS_RANGE,
    noise: int = TOY_NOISE,
) -> Tuple[np.ndarray, np.ndarray]:
    """One RGB image and its boolean blob mask."""
    radius = int(rng.integers(radius_range[0], radius_range[1] + 1))
    cy, cx = rng.integers(radius + 1, size - radius - 1, size=2)
    yy, xx = np.mgrid[0:size, 0:size]
    blob = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2

    background = BACKGROUND_GRAY + rng.integers(-noise, noise + 1, size=(size, size, 3))
    image = np.clip(background, 0, 255).astype(np.uint8)
    image[blob] = np.asarray(color, dtype=np.uint8)
    return image, blob


def generate_toy_dataset(
    root: Path,
    classes: int = len(CLASS_COLORS),
    per_class: int = TOY_IMAGES_PER_CLASS,
    size: int = TOY_IMAGE_SIZE,
    seed: int = 0,
    colors: Sequence[Tuple[int, int, int]] = CLASS_COLORS,
    names: Sequence[str] = CLASS_NAMES,
) -> Dataset:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)

    records: List[ImageRecord] = []
    for c in range(classes):
        for j in range(per_class):
            image_id = f"{names[c]}_{j:03d}"
            image, blob = draw_blob_image(image_rng(seed, c, j), colors[c], size)
            image_path = root / "images" / f"{image_id}.png"
            mask_path = root / "masks" / f"{image_id}.png"
            save_image(image_path, image)
            Image.fromarray((blob * 255).astype(np.uint8)).save(mask_path)
            records.append(ImageRecord(image_id, image_path, c, mask_path))

    write_labels(root, list(names[:classes]), records)
    logger.info("Toy dataset written to %s: %s classes x %s images", root, classes, per_class)
    return Dataset(root, records, list(names[:classes]))


def write_toy_config(root: Path) -> Path:
    path = Path(root) / "run.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(TOY_RUN_CONFIG, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
