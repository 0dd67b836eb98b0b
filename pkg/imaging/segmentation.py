"""
Multi-resolution SLIC superpixels and physical adjacency.

SLIC clustering comes from scikit-image (CIELAB distance, no randomness, so
identical input bytes give identical label maps). Its own connectivity pass is
switched off: every label is split here into 4-connected components and
components smaller than a quarter of the average segment size are merged into
their largest adjacent neighbor; labels are then renumbered densely in raster
order of first appearance.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage import segmentation

from common.errors import DomainError, FormatError, PreconditionError
from games.neighbor_graph import EdgeKind, NeighborGraph
from imaging.image_io import as_image

logger = logging.getLogger(__name__)

DEFAULT_COMPACTNESS = 10.0
DEFAULT_ITERATIONS = 10
ORPHAN_FRACTION = 0.25
MIN_PIXELS_PER_SEGMENT = 16

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class ResolutionLevel(str, Enum):
    LARGE = "large"
    MEDIUM = "medium"
    SMALL = "small"

    @property
    def target(self) -> int:
        return DEFAULT_TARGETS[self]


DEFAULT_TARGETS = {
    ResolutionLevel.LARGE: 15,
    ResolutionLevel.MEDIUM: 50,
    ResolutionLevel.SMALL: 80,
}


@dataclass
class LabelMap:
    labels: np.ndarray
    level: Optional[ResolutionLevel] = None
    target: Optional[int] = None
    compactness: Optional[float] = None
    iterations: Optional[int] = None

    @property
    def segment_count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape


@dataclass
class Segment:
    id: int
    level: Optional[ResolutionLevel]
    pixel_count: int
    bounding_box: Tuple[int, int, int, int]  # top, left, bottom, right (exclusive)
    mean_color: Tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "level": self.level.value if self.level else None,
            "pixel_count": self.pixel_count,
            "bounding_box": list(self.bounding_box),
            "mean_color": [round(c, 6) for c in self.mean_color],
        }


@dataclass
class SegmentationSet:
    image_id: str
    maps: Dict[ResolutionLevel, LabelMap]
    segments: Dict[ResolutionLevel, List[Segment]] = field(default_factory=dict)

    def levels(self) -> List[ResolutionLevel]:
        return [level for level in ResolutionLevel if level in self.maps]

    def segment_count(self) -> int:
        return sum(m.segment_count for m in self.maps.values())


# ============= SLIC =============

def slic(
    image: np.ndarray,
    n_segments: int,
    compactness: float = DEFAULT_COMPACTNESS,
    iterations: int = DEFAULT_ITERATIONS,
) -> LabelMap:
    """Segment an RGB image into roughly n_segments superpixels."""
    if n_segments < 2:
        raise PreconditionError(f"n_segments must be >= 2, got {n_segments}")
    if iterations < 1:
        raise PreconditionError(f"iterations must be >= 1, got {iterations}")
    image = as_image(image)
    h, w = image.shape[:2]
    if n_segments > h * w:
        raise DomainError(f"{h}x{w} image cannot hold {n_segments} segments")

    labels = segmentation.slic(
        image,
        n_segments=n_segments,
        compactness=compactness,
        max_num_iter=iterations,
        convert2lab=True,
        enforce_connectivity=False,
        start_label=0,
        channel_axis=-1,
    )
    k = len(np.unique(labels))
    labels = enforce_connectivity(labels, min_size=int(ORPHAN_FRACTION * h * w / k))
    return LabelMap(labels=labels)


def _relabel_raster_order(labels: np.ndarray) -> np.ndarray:
    _, first = np.unique(labels.ravel(), return_index=True)
    order = np.argsort(first)
    old_ids = labels.ravel()[first[order]]
    lookup = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    lookup[old_ids] = np.arange(len(old_ids), dtype=np.int32)
    return lookup[labels]


def _adjacent_labels(labels: np.ndarray, region: np.ndarray) -> np.ndarray:
    ring = ndimage.binary_dilation(region, structure=FOUR_CONNECTED) & ~region
    return np.unique(labels[ring])


def enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Split labels into 4-connected components and merge small orphans into their largest neighbor."""
    components = np.zeros(labels.shape, dtype=np.int32)
    next_id = 0
    for value in np.unique(labels):
        comp, n = ndimage.label(labels == value, structure=FOUR_CONNECTED)
        mask = comp > 0
        components[mask] = comp[mask] + next_id - 1
        next_id += n

    sizes = np.bincount(components.ravel(), minlength=next_id)
    for comp_id in range(next_id):
        if sizes[comp_id] == 0 or sizes[comp_id] >= min_size:
            continue
        region = components == comp_id
        neighbors = _adjacent_labels(components, region)
        if len(neighbors) == 0:
            continue
        target = int(neighbors[np.argmax(sizes[neighbors])])
        components[region] = target
        sizes[target] += sizes[comp_id]
        sizes[comp_id] = 0

    return _relabel_raster_order(components)


# ============= Adjacency and geometry =============

def adjacency(label_map: LabelMap) -> NeighborGraph:
    """Physical neighbor graph: segments sharing a 4-connected pixel border."""
    labels = label_map.labels
    graph = NeighborGraph(label_map.segment_count)
    pairs = np.concatenate([
        np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
        np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs):
        pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    for a, b in pairs:
        graph.add_edge(int(a), int(b), EdgeKind.PHYSICAL)
    return graph


def segment_stats(image: np.ndarray, label_map: LabelMap) -> List[Segment]:
    labels = label_map.labels
    n = label_map.segment_count
    counts = np.bincount(labels.ravel(), minlength=n)
    color_sums = [np.bincount(labels.ravel(), weights=image[..., c].ravel().astype(float), minlength=n)
                  for c in range(3)]
    boxes = ndimage.find_objects(labels + 1)
    segments = []
    for sid in range(n):
        sl = boxes[sid]
        segments.append(Segment(
            id=sid,
            level=label_map.level,
            pixel_count=int(counts[sid]),
            bounding_box=(sl[0].start, sl[1].start, sl[0].stop, sl[1].stop),
            mean_color=tuple(float(color_sums[c][sid] / counts[sid]) for c in range(3)),
        ))
    return segments


def clamp_target(target: int, height: int, width: int) -> int:
    limit = max(2, (height * width) // MIN_PIXELS_PER_SEGMENT)
    if target > limit:
        logger.warning("Target of %s segments too high for %sx%s image; clamped to %s",
                       target, height, width, limit)
        return limit
    return target


def multi_resolution_segment(
    image: np.ndarray,
    image_id: str = "image",
    targets: Optional[Dict[ResolutionLevel, int]] = None,
    compactness: float = DEFAULT_COMPACTNESS,
    iterations: int = DEFAULT_ITERATIONS,
) -> SegmentationSet:
    """Segment one image at the three resolution levels."""
    image = as_image(image)
    h, w = image.shape[:2]
    targets = dict(DEFAULT_TARGETS if targets is None else targets)
    maps: Dict[ResolutionLevel, LabelMap] = {}
    segments: Dict[ResolutionLevel, List[Segment]] = {}
    for level in ResolutionLevel:
        if level not in targets:
            continue
        target = clamp_target(int(targets[level]), h, w)
        label_map = slic(image, target, compactness, iterations)
        label_map.level = level
        label_map.target = target
        label_map.compactness = float(compactness)
        label_map.iterations = int(iterations)
        maps[level] = label_map
        segments[level] = segment_stats(image, label_map)
        logger.debug("[%s] %s level: %s segments (target %s)",
                     image_id, level.value, label_map.segment_count, target)
    return SegmentationSet(image_id=image_id, maps=maps, segments=segments)


# ============= Persistence =============

def save_label_map(folder: Path, image_id: str, label_map: LabelMap, segments: Sequence[Segment]) -> Path:
    """Write <image_id>_<level>.png (16-bit ids) plus a JSON sidecar."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    stem = f"{image_id}_{label_map.level.value}"
    png_path = folder / f"{stem}.png"
    Image.fromarray(label_map.labels.astype(np.uint16)).save(png_path)
    sidecar = {
        "image_id": image_id,
        "level": label_map.level.value,
        "target": label_map.target,
        "compactness": label_map.compactness,
        "iterations": label_map.iterations,
        "segment_count": label_map.segment_count,
        "segments": [s.to_dict() for s in segments],
    }
    with (folder / f"{stem}.json").open("w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    return png_path


def save_segmentation(folder: Path, seg_set: SegmentationSet) -> List[Path]:
    return [save_label_map(folder, seg_set.image_id, seg_set.maps[level], seg_set.segments[level])
            for level in seg_set.levels()]


def load_segmentation(folder: Path, image_id: str, image: Optional[np.ndarray] = None) -> SegmentationSet:
    folder = Path(folder)
    maps: Dict[ResolutionLevel, LabelMap] = {}
    segments: Dict[ResolutionLevel, List[Segment]] = {}
    for level in ResolutionLevel:
        png_path = folder / f"{image_id}_{level.value}.png"
        sidecar_path = folder / f"{image_id}_{level.value}.json"
        if not png_path.exists():
            continue
        with Image.open(png_path) as img:
            labels = np.array(img, dtype=np.int32)
        sidecar = {}
        if sidecar_path.exists():
            with sidecar_path.open("r", encoding="utf-8") as f:
                sidecar = json.load(f)
        label_map = LabelMap(labels=labels, level=level, target=sidecar.get("target"),
                             compactness=sidecar.get("compactness"), iterations=sidecar.get("iterations"))
        if image is not None:
            if label_map.shape != image.shape[:2]:
                raise FormatError(f"label maps for {image_id} do not match the image size")
            segments[level] = segment_stats(image, label_map)
        maps[level] = label_map
    if not maps:
        raise FileNotFoundError(f"No label maps for {image_id} in {folder}")
    return SegmentationSet(image_id=image_id, maps=maps, segments=segments)


def segmentation_matches(
    seg_set: SegmentationSet,
    image: np.ndarray,
    targets: Optional[Dict[ResolutionLevel, int]] = None,
    compactness: float = DEFAULT_COMPACTNESS,
    iterations: int = DEFAULT_ITERATIONS,
) -> bool:
    """True when cached label maps were produced by exactly these segmentation parameters."""
    h, w = image.shape[:2]
    targets = dict(DEFAULT_TARGETS if targets is None else targets)
    if set(seg_set.levels()) != set(targets):
        return False
    for level, label_map in seg_set.maps.items():
        if label_map.shape != (h, w):
            return False
        if label_map.target != clamp_target(int(targets[level]), h, w):
            return False
        if label_map.compactness is None or float(label_map.compactness) != float(compactness):
            return False
        if label_map.iterations != int(iterations):
            return False
    return True
