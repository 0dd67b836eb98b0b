"""
Instance-wise saliency: paint each level's segment scores onto pixels,
scale every level to [-1, 1] by its max-abs value, average the levels and
rescale the result.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.colors import LinearSegmentedColormap
from PIL import Image

from common.errors import DomainError
from explain.attribution import SegmentScoreTable
from imaging.segmentation import SegmentationSet

logger = logging.getLogger(__name__)

# negative -> green, zero -> white, positive -> red
SALIENCY_CMAP = LinearSegmentedColormap.from_list("green_white_red", ["#1a9641", "#ffffff", "#d7191c"])


@dataclass
class SaliencyMap:
    scores: np.ndarray
    image_id: str

    def max_abs(self) -> float:
        return float(np.abs(self.scores).max()) if self.scores.size else 0.0


def _scale_max_abs(values: np.ndarray) -> np.ndarray:
    peak = np.abs(values).max() if values.size else 0.0
    if peak == 0:
        return np.zeros_like(values, dtype=float)
    return values / peak


def saliency(table: SegmentScoreTable, seg_set: SegmentationSet) -> SaliencyMap:
    levels = seg_set.levels()
    if not levels:
        raise DomainError(f"segmentation of {seg_set.image_id} has no levels")

    painted = []
    for level in levels:
        label_map = seg_set.maps[level]
        values = table.level_values(seg_set.image_id, level, label_map.segment_count)
        painted.append(_scale_max_abs(values)[label_map.labels])

    combined = np.mean(painted, axis=0)
    return SaliencyMap(scores=_scale_max_abs(combined), image_id=seg_set.image_id)


def render_saliency(saliency_map: SaliencyMap) -> np.ndarray:
    rgba = SALIENCY_CMAP((saliency_map.scores + 1.0) / 2.0)
    return (np.asarray(rgba)[..., :3] * 255).round().astype(np.uint8)


def save_saliency_png(path: Path, saliency_map: SaliencyMap) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(render_saliency(saliency_map)).save(path)
    logger.info("[%s] Saliency map written to %s", saliency_map.image_id, path)
