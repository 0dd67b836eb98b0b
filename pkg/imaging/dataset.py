"""
Labelled image folders.

Layout:
    <root>/labels.json   {"classes": ["red", ...],
                          "images": [{"image_id": "red_000", "class_id": 0,
                                      "file": "images/red_000.png", "mask": "masks/red_000.png"}]}
    <root>/images/*.png
    <root>/masks/*.png   (optional ground-truth blob masks)

A folder without labels.json is read as unlabelled images.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from common.errors import FormatError
from imaging.image_io import image_id_for, list_images, load_image

logger = logging.getLogger(__name__)

LABELS_FILE = "labels.json"


@dataclass
class ImageRecord:
    image_id: str
    path: Path
    class_id: Optional[int] = None
    mask_path: Optional[Path] = None


class Dataset:
    def __init__(self, root: Path, records: List[ImageRecord], class_names: Optional[List[str]] = None):
        self.root = Path(root)
        self.records: Dict[str, ImageRecord] = {r.image_id: r for r in records}
        self.class_names = list(class_names or [])
        self._cache: Dict[str, np.ndarray] = {}

    @classmethod
    def load(cls, root: Path) -> "Dataset":
        root = Path(root)
        if not root.exists():
            raise FileNotFoundError(f"Data folder not found at {root}")
        labels_path = root / LABELS_FILE
        if not labels_path.exists():
            folder = root / "images" if (root / "images").is_dir() else root
            records = [ImageRecord(image_id_for(p), p) for p in list_images(folder)]
            logger.info("Loaded %s unlabelled images from %s", len(records), folder)
            return cls(root, records)

        try:
            with labels_path.open("r", encoding="utf-8") as f:
                data = json.load(f)
            records = [
                ImageRecord(
                    image_id=str(entry["image_id"]),
                    path=root / entry["file"],
                    class_id=int(entry["class_id"]),
                    mask_path=root / entry["mask"] if entry.get("mask") else None,
                )
                for entry in data["images"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{labels_path}: invalid labels file: {e}") from e
        logger.info("Loaded %s labelled images (%s classes) from %s",
                    len(records), len(data.get("classes", [])), root)
        return cls(root, records, data.get("classes"))

    def __len__(self) -> int:
        return len(self.records)

    def class_ids(self) -> List[int]:
        return sorted({r.class_id for r in self.records.values() if r.class_id is not None})

    def image_ids(self, class_id: Optional[int] = None) -> List[str]:
        return sorted(
            image_id for image_id, r in self.records.items()
            if class_id is None or r.class_id == class_id
        )

    def image(self, image_id: str) -> np.ndarray:
        if image_id not in self._cache:
            self._cache[image_id] = load_image(self.records[image_id].path)
        return self._cache[image_id]

    def images(self, image_ids: List[str]) -> Dict[str, np.ndarray]:
        return {image_id: self.image(image_id) for image_id in image_ids}

    def label(self, image_id: str) -> Optional[int]:
        return self.records[image_id].class_id

    def labels(self, image_ids: List[str]) -> Dict[str, int]:
        return {image_id: self.label(image_id) for image_id in image_ids}

    def blob_mask(self, image_id: str) -> Optional[np.ndarray]:
        path = self.records[image_id].mask_path
        if path is None or not path.exists():
            return None
        with Image.open(path) as img:
            return np.array(img.convert("L")) > 0


def write_labels(root: Path, class_names: List[str], records: List[ImageRecord]) -> Path:
    root = Path(root)
    payload = {
        "classes": list(class_names),
        "images": [
            {
                "image_id": r.image_id,
                "class_id": r.class_id,
                "file": r.path.relative_to(root).as_posix(),
                "mask": r.mask_path.relative_to(root).as_posix() if r.mask_path else None,
            }
            for r in records
        ],
    }
    path = root / LABELS_FILE
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    return path
