"""
Scoring criteria for a class's concept scores, computed over the top-k concepts.

- coherency: Pearson correlation between concept scores and eta, the mean
  cosine similarity of each member's segment embedding to its source image
  embedding.
- complexity: entropy of the clamped, normalized top-k scores.
- faithfulness: Pearson correlation between concept scores and the
  per-member logit degradation observed when the concept is removed.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from common.errors import DomainError, UndefinedMetricError
from concepts.concept_discovery import Concept, SegmentRef, segment_pixel_mask
from explain.concept_scores import TOP_CONCEPTS, ConceptScore, top_concepts
from imaging.segmentation import SegmentationSet
from models.masking import MaskingPolicy, mask_pixels
from models.scorers import ModelSpec, predict

logger = logging.getLogger(__name__)

SCORE_FLOOR = 1e-12


@dataclass
class CriteriaReport:
    k: int
    coherency: Optional[float]
    complexity: Optional[float]
    faithfulness: Optional[float]
    concept_ids: List[int] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)
    etas: List[Optional[float]] = field(default_factory=list)
    phis: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def undefined(self) -> bool:
        return any(v is None for v in (self.coherency, self.complexity, self.faithfulness))

    def to_dict(self) -> dict:
        return asdict(self)

    def concept_table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "concept_id": self.concept_ids,
            "score": self.scores,
            "eta": self.etas,
            "phi_normalized": self.phis,
        })


# ============= Correlations =============

def _pearson(a: Sequence[float], b: Sequence[float], what: str) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise DomainError(f"{what}: vectors differ in length ({len(a)} vs {len(b)})")
    if len(a) < 2:
        raise UndefinedMetricError(f"{what} needs at least 2 concepts, got {len(a)}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedMetricError(f"{what} undefined: a correlated vector has zero variance")
    return float(stats.pearsonr(a, b)[0])


def coherency_score(scores: Sequence[float], etas: Sequence[float]) -> float:
    return _pearson(scores, etas, "coherency")


def faithfulness_score(scores: Sequence[float], phis: Sequence[float]) -> float:
    return _pearson(scores, phis, "faithfulness")


# ============= Coherency =============

def _cosine(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return None
    return float(a @ b / (na * nb))


def concept_coherency(
    concept: Concept,
    embeddings: Mapping[SegmentRef, np.ndarray],
    image_embeddings: Mapping[str, np.ndarray],
) -> float:
    """Mean cosine similarity between member segment embeddings and their source image embeddings."""
    cosines = []
    for ref in concept.members:
        cos = _cosine(np.asarray(embeddings[ref], dtype=float),
                      np.asarray(image_embeddings[ref.image_id], dtype=float))
        if cos is None:
            logger.warning("Zero-norm embedding for segment %s; skipped in coherency", tuple(ref))
            continue
        cosines.append(cos)
    if not cosines:
        raise UndefinedMetricError(f"concept {concept.id} has no member with a usable embedding")
    return math.fsum(cosines) / len(cosines)


# ============= Complexity =============

def complexity(scores: Sequence[float]) -> float:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise UndefinedMetricError("complexity needs at least one concept score")
    if np.all(scores <= 0):
        raise UndefinedMetricError("complexity undefined: every top-k score is <= 0")
    clamped = np.maximum(scores, SCORE_FLOOR)
    return float(stats.entropy(clamped / clamped.sum()))


# ============= Faithfulness =============

def concept_degradation(
    concept: Concept,
    images: Mapping[str, np.ndarray],
    seg_sets: Mapping[str, SegmentationSet],
    model: ModelSpec,
    class_k: int,
    policy: MaskingPolicy,
    normalize: bool = True,
) -> float:
    """
    Mean class-k logit drop over the images when the concept's segments are
    removed; divided by the member count when normalize is set.

    Levels overlap, so members are removed one level at a time and the
    per-level drops of an image are summed: every member is counted once,
    the same way the class-wise concept score averages member values.
    """
    if not images:
        return 0.0
    members: Dict[str, Dict[str, List[SegmentRef]]] = {}
    for ref in concept.members:
        members.setdefault(ref.image_id, {}).setdefault(ref.level, []).append(ref)

    drops = []
    for image_id in sorted(images):
        image = images[image_id]
        resolved = policy.resolve(image)
        full = predict(model, image).logits[class_k]
        drop = 0.0
        for level in sorted(members.get(image_id, {})):
            pixels = segment_pixel_mask(seg_sets[image_id], members[image_id][level])
            if not pixels.any():
                continue
            drop += float(full - predict(model, mask_pixels(image, pixels, resolved)).logits[class_k])
        drops.append(drop)
    phi = math.fsum(drops) / len(drops)
    if normalize:
        return phi / max(1, len(concept.members))
    return phi


# ============= Report =============

def evaluate_criteria(
    scores: Sequence[ConceptScore],
    concepts: Mapping[int, Concept],
    embeddings: Mapping[SegmentRef, np.ndarray],
    image_embeddings: Mapping[str, np.ndarray],
    images: Mapping[str, np.ndarray],
    seg_sets: Mapping[str, SegmentationSet],
    model: ModelSpec,
    class_k: int,
    policy: MaskingPolicy,
    k: int = TOP_CONCEPTS,
) -> CriteriaReport:
    """All three criteria at top-k; undefined metrics become None plus a warning."""
    top = top_concepts(scores, k)
    warnings: List[str] = []
    etas: List[Optional[float]] = []
    phis: List[float] = []
    for score in top:
        concept = concepts[score.concept_id]
        try:
            etas.append(concept_coherency(concept, embeddings, image_embeddings))
        except UndefinedMetricError as e:
            warnings.append(str(e))
            etas.append(None)
        phis.append(concept_degradation(concept, images, seg_sets, model, class_k, policy))

    sc = [s.score for s in top]
    results: Dict[str, Optional[float]] = {}
    defined_etas = [(s, e) for s, e in zip(sc, etas) if e is not None]
    metrics = {
        "coherency": lambda: coherency_score([s for s, _ in defined_etas], [e for _, e in defined_etas]),
        "complexity": lambda: complexity(sc),
        "faithfulness": lambda: faithfulness_score(sc, phis),
    }
    for name, compute in metrics.items():
        try:
            results[name] = compute()
        except UndefinedMetricError as e:
            logger.warning("Class %s: %s", class_k, e)
            warnings.append(str(e))
            results[name] = None

    return CriteriaReport(
        k=k,
        coherency=results["coherency"],
        complexity=results["complexity"],
        faithfulness=results["faithfulness"],
        concept_ids=[s.concept_id for s in top],
        scores=sc,
        etas=etas,
        phis=phis,
        warnings=warnings,
    )


def save_criteria(folder: Path, class_id: int, report: CriteriaReport) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    with (folder / f"criteria_class{class_id}.json").open("w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    report.concept_table().to_csv(folder / f"criteria_class{class_id}.csv", index=False, float_format="%.10g")
