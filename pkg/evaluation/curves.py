"""
Smallest sufficient / destroying concept curves.

For each k: SDC removes the top-k concepts' pixels from every image and
measures argmax accuracy; SSC starts from the fully masked image and adds
back only the top-k concepts. The least_* variants use the bottom-k concepts.
A prediction counts as correct only when the label holds the unique top logit;
a tie (e.g. a detector that sees nothing) is never correct.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from common.errors import DomainError
from concepts.concept_discovery import ConceptModel, concept_pixel_mask
from explain.concept_scores import ConceptScore, top_concepts
from imaging.segmentation import SegmentationSet
from models.masking import MaskingPolicy, mask_pixels
from models.scorers import ModelSpec, predict

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 3, 4, 5)


class CurveMode(str, Enum):
    SSC_ADD = "SSC_add"
    SDC_REMOVE = "SDC_remove"
    LEAST_ADD = "least_add"
    LEAST_REMOVE = "least_remove"

    @property
    def least(self) -> bool:
        return self in (CurveMode.LEAST_ADD, CurveMode.LEAST_REMOVE)

    @property
    def keeps(self) -> bool:
        return self in (CurveMode.SSC_ADD, CurveMode.LEAST_ADD)


@dataclass
class CurvePoint:
    top_k: int
    accuracy: float
    mode: CurveMode
    instances: int

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mode"] = self.mode.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CurvePoint":
        return cls(int(data["top_k"]), float(data["accuracy"]), CurveMode(data["mode"]), int(data["instances"]))


def _perturbed_correct(
    image: np.ndarray,
    seg_set: SegmentationSet,
    concept_model: ConceptModel,
    concept_ids: Sequence[int],
    label: int,
    model: ModelSpec,
    policy: MaskingPolicy,
    keep: bool,
) -> bool:
    pixels = concept_pixel_mask(seg_set, concept_model, concept_ids)
    if keep:
        pixels = ~pixels
    perturbed = mask_pixels(image, pixels, policy.resolve(image))
    return predict(model, perturbed).predicted_class() == label


def baseline_accuracy(
    images: Mapping[str, np.ndarray], labels: Mapping[str, int], model: ModelSpec
) -> float:
    ids = sorted(images)
    if not ids:
        return float("nan")
    return float(np.mean([predict(model, images[i]).predicted_class() == labels[i] for i in ids]))


def ssc_sdc_curves(
    scores: Sequence[ConceptScore],
    concept_model: ConceptModel,
    images: Mapping[str, np.ndarray],
    seg_sets: Mapping[str, SegmentationSet],
    labels: Mapping[str, int],
    model: ModelSpec,
    policy: MaskingPolicy,
    ks: Sequence[int] = DEFAULT_KS,
    modes: Sequence[CurveMode] = tuple(CurveMode),
    jobs: int = 1,
) -> List[CurvePoint]:
    ids = sorted(images)
    if not ids:
        raise DomainError("SSC/SDC curves need at least one image")

    points: List[CurvePoint] = []
    for mode in modes:
        for k in ks:
            concept_ids = [s.concept_id for s in top_concepts(scores, k, least=mode.least)]

            def run(image_id: str) -> bool:
                return _perturbed_correct(images[image_id], seg_sets[image_id], concept_model,
                                          concept_ids, labels[image_id], model, policy, mode.keeps)

            if jobs <= 1:
                correct = [run(i) for i in ids]
            else:
                correct = Parallel(n_jobs=jobs, prefer="threads")(delayed(run)(i) for i in ids)
            points.append(CurvePoint(k, float(np.mean(correct)), mode, len(ids)))
        logger.debug("Class %s %s: %s", concept_model.class_id, mode.value,
                     [round(p.accuracy, 3) for p in points if p.mode == mode])
    return points


def merge_curves(curves: Sequence[Sequence[CurvePoint]]) -> List[CurvePoint]:
    """Instance-weighted average of per-class curves."""
    totals: Dict[tuple, List[float]] = {}
    for curve in curves:
        for p in curve:
            entry = totals.setdefault((p.mode, p.top_k), [0.0, 0])
            entry[0] += p.accuracy * p.instances
            entry[1] += p.instances
    merged = [
        CurvePoint(top_k, correct / count, mode, int(count))
        for (mode, top_k), (correct, count) in totals.items()
    ]
    order = list(CurveMode)
    return sorted(merged, key=lambda p: (order.index(p.mode), p.top_k))


def curve_frame(points: Sequence[CurvePoint]) -> pd.DataFrame:
    return pd.DataFrame([p.to_dict() for p in points], columns=["top_k", "accuracy", "mode", "instances"])


def save_curves_csv(path: Path, points: Sequence[CurvePoint]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    curve_frame(points).to_csv(path, index=False, float_format="%.10g")


def save_gnuplot(path: Path, points: Sequence[CurvePoint]) -> None:
    """Whitespace-separated table: one row per k, one column per mode."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wide = curve_frame(points).pivot(index="top_k", columns="mode", values="accuracy")
    wide = wide[[m.value for m in CurveMode if m.value in wide.columns]]
    with path.open("w", encoding="utf-8") as f:
        f.write("# top_k " + " ".join(wide.columns) + "\n")
        for k, row in wide.iterrows():
            f.write(f"{k} " + " ".join(f"{v:.6f}" for v in row.to_numpy()) + "\n")
