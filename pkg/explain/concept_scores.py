"""
Concept importances from segment scores.

Instance-wise importance of a concept is the sum of its member segments'
values in that image. The class-wise score SC_i averages the values of all
members of concept i across the class; concept-free (dropped) segments are
never counted.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from concepts.concept_discovery import ConceptModel
from explain.attribution import SegmentScoreTable

logger = logging.getLogger(__name__)

TOP_CONCEPTS = 5


@dataclass
class ConceptScore:
    concept_id: int
    score: float
    member_count: int
    rank: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def instance_concept_importance(
    table: SegmentScoreTable, concept_model: ConceptModel, image_id: str
) -> Dict[int, float]:
    """Per-concept sum of segment values for one image; concepts absent from it are omitted."""
    members: Dict[int, List[float]] = {}
    for ref, value in table.for_image(image_id).values_by_ref().items():
        concept = concept_model.concept_of(ref)
        if concept is not None:
            members.setdefault(concept, []).append(value)
    return {cid: math.fsum(values) for cid, values in sorted(members.items())}


def top_instance_concepts(
    importances: Dict[int, float], top: int = TOP_CONCEPTS, normalize: bool = False
) -> List[Tuple[int, float]]:
    """Highest-importance concepts of one instance, optionally divided by the max |importance|."""
    ranked = sorted(importances.items(), key=lambda item: (-item[1], item[0]))[:top]
    if normalize and importances:
        peak = max(abs(v) for v in importances.values())
        if peak > 0:
            ranked = [(cid, value / peak) for cid, value in ranked]
    return ranked


def dense_ranks(scores: Sequence[float]) -> List[int]:
    if not len(scores):
        return []
    ranks = pd.Series(list(scores), dtype=float).rank(method="dense", ascending=False)
    return [int(r) for r in ranks]


def class_concept_scores(table: SegmentScoreTable, concept_model: ConceptModel) -> List[ConceptScore]:
    """SC_i for every surviving concept, ranked densely by descending score."""
    values = table.values_by_ref()
    for cid in concept_model.dropped:
        logger.warning("Concept %s of class %s has no members after outlier dropping; excluded",
                       cid, concept_model.class_id)

    scores: List[ConceptScore] = []
    for cid in concept_model.concept_ids():
        member_values = [values[ref] for ref in concept_model.members(cid) if ref in values]
        if not member_values:
            logger.warning("Concept %s of class %s has no attributed members; excluded",
                           cid, concept_model.class_id)
            continue
        scores.append(ConceptScore(cid, math.fsum(member_values) / len(member_values), len(member_values)))

    for score, rank in zip(scores, dense_ranks([s.score for s in scores])):
        score.rank = rank
    scores.sort(key=lambda s: (s.rank, s.concept_id))
    return scores


def top_concepts(scores: Sequence[ConceptScore], k: int = TOP_CONCEPTS, least: bool = False) -> List[ConceptScore]:
    ordered = sorted(scores, key=lambda s: (s.rank, s.concept_id))
    if least:
        ordered = sorted(scores, key=lambda s: (-s.rank, s.concept_id))
    return ordered[:k]


def save_concept_scores(path: Path, class_id: int, scores: Sequence[ConceptScore]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"class_id": class_id, "concepts": [s.to_dict() for s in scores]}
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def load_concept_scores(path: Path) -> List[ConceptScore]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Concept scores not found at {path}; run 'explain-class' first")
    with path.open("r", encoding="utf-8") as f:
        payload = json.load(f)
    return [ConceptScore(**entry) for entry in payload["concepts"]]
