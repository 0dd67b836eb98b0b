"""
Concept discovery for one class.

Every segment of every class image (all resolution levels) is cropped to its
bounding box, out-of-segment pixels are painted with the masking policy, the
crop is bicubic-resized to the model's input size and passed through the
representation layer. The embeddings are clustered with k-means (k-means++
seeding, Lloyd iterations); clusters with fewer than max(3, 0.5% of segments)
members are dropped and their segments marked concept-free.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from common.errors import DomainError, FormatError, PreconditionError
from games.neighbor_graph import EdgeKind, NeighborGraph
from imaging.image_io import resize_bicubic
from imaging.segmentation import LabelMap, ResolutionLevel, Segment, SegmentationSet
from models.masking import MaskingPolicy
from models.scorers import ModelSpec, represent

logger = logging.getLogger(__name__)

DEFAULT_CONCEPTS = 20
DEFAULT_MAX_ITER = 100
EXEMPLARS_PER_CONCEPT = 5
MIN_CONCEPT_MEMBERS = 3
MIN_CONCEPT_FRACTION = 0.005


class SegmentRef(NamedTuple):
    image_id: str
    level: str
    segment_id: int


@dataclass
class Embedding:
    vector: np.ndarray
    segment_ref: SegmentRef


@dataclass
class Concept:
    id: int
    members: List[SegmentRef]
    exemplars: List[SegmentRef]


@dataclass
class ConceptModel:
    class_id: int
    m: int
    centers: np.ndarray
    assignment: Dict[SegmentRef, Optional[int]]
    member_counts: Dict[int, int]
    dropped: List[int] = field(default_factory=list)
    inertia_history: List[float] = field(default_factory=list)
    exemplars: Dict[int, List[SegmentRef]] = field(default_factory=dict)

    def concept_of(self, ref: SegmentRef) -> Optional[int]:
        """Concept id of a segment, or None when its cluster was dropped."""
        if ref not in self.assignment:
            raise DomainError(f"segment {tuple(ref)} was never assigned to a concept")
        return self.assignment[ref]

    def concept_ids(self) -> List[int]:
        return sorted(self.member_counts)

    def members(self, concept_id: int) -> List[SegmentRef]:
        return [ref for ref, cid in self.assignment.items() if cid == concept_id]

    def concepts(self) -> List[Concept]:
        return [
            Concept(id=cid, members=self.members(cid), exemplars=self.exemplars.get(cid, []))
            for cid in self.concept_ids()
        ]

    def instance_refs(self, image_id: str) -> List[SegmentRef]:
        return [ref for ref in self.assignment if ref.image_id == image_id]


# ============= Embeddings =============

def extract_embedding(
    model: ModelSpec,
    image: np.ndarray,
    label_map: LabelMap,
    segment: Segment,
    policy: MaskingPolicy,
    image_id: str = "image",
) -> Embedding:
    """Crop, mask, bicubic-resize and embed one segment."""
    top, left, bottom, right = segment.bounding_box
    h, w = image.shape[:2]
    if segment.id >= label_map.segment_count or bottom > h or right > w:
        raise DomainError(f"segment {segment.id} does not belong to image {image_id}")

    policy = policy.resolve(image)
    crop = image[top:bottom, left:right].copy()
    outside = label_map.labels[top:bottom, left:right] != segment.id
    if outside.any():
        crop[outside] = policy.fill()
    vector = represent(model, resize_bicubic(crop, model.input_size))
    level = label_map.level.value if label_map.level else ""
    return Embedding(vector=np.asarray(vector, dtype=float),
                     segment_ref=SegmentRef(image_id, level, segment.id))


def extract_class_embeddings(
    model: ModelSpec,
    images: Dict[str, np.ndarray],
    seg_sets: Dict[str, SegmentationSet],
    policy: MaskingPolicy,
    jobs: int = 1,
) -> List[Embedding]:
    tasks = []
    for image_id in sorted(seg_sets):
        seg_set = seg_sets[image_id]
        for level in seg_set.levels():
            for segment in seg_set.segments[level]:
                tasks.append((image_id, level, segment))

    def run(task):
        image_id, level, segment = task
        return extract_embedding(model, images[image_id], seg_sets[image_id].maps[level],
                                 segment, policy, image_id)

    if jobs <= 1:
        return [run(t) for t in tasks]
    return Parallel(n_jobs=jobs, prefer="threads")(delayed(run)(t) for t in tasks)


# ============= Clustering =============

def kmeans(
    embeddings: Sequence[Embedding],
    m: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    class_id: int = 0,
) -> ConceptModel:
    """Lloyd's k-means with k-means++ seeding; deterministic for a fixed seed."""
    if m < 1:
        raise DomainError(f"cluster count must be >= 1, got {m}")
    if max_iter < 1:
        raise PreconditionError(f"max_iter must be >= 1, got {max_iter}")
    if len(embeddings) < m:
        raise DomainError(f"{len(embeddings)} points cannot form {m} clusters")

    X = np.stack([e.vector for e in embeddings]).astype(float)
    centers, _ = kmeans_plusplus(X, n_clusters=m, random_state=seed)
    centers = centers.astype(float)

    history: List[float] = []
    assign: Optional[np.ndarray] = None
    for _ in range(max_iter):
        distances = cdist(X, centers, "sqeuclidean")
        new_assign = distances.argmin(axis=1)
        history.append(float(distances[np.arange(len(X)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(m):
            members = X[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)

    distances = cdist(X, centers, "sqeuclidean")
    refs = [e.segment_ref for e in embeddings]
    assignment = {ref: int(c) for ref, c in zip(refs, assign)}
    counts = np.bincount(assign, minlength=m)
    exemplars = {}
    for c in range(m):
        idx = np.flatnonzero(assign == c)
        nearest = idx[np.argsort(distances[idx, c], kind="stable")[:EXEMPLARS_PER_CONCEPT]]
        exemplars[c] = [refs[i] for i in nearest]

    logger.info("k-means class %s: %s points, %s clusters, %s iterations, inertia %.6g",
                class_id, len(X), m, len(history), history[-1])
    return ConceptModel(
        class_id=class_id,
        m=m,
        centers=centers,
        assignment=assignment,
        member_counts={c: int(counts[c]) for c in range(m) if counts[c] > 0},
        inertia_history=history,
        exemplars={c: ex for c, ex in exemplars.items() if ex},
    )


def drop_small_concepts(model: ConceptModel, min_members: Optional[int] = None) -> ConceptModel:
    """Mark segments of undersized clusters concept-free."""
    total = len(model.assignment)
    threshold = min_members
    if threshold is None:
        threshold = max(MIN_CONCEPT_MEMBERS, int(math.ceil(MIN_CONCEPT_FRACTION * total)))
    dropped = sorted(c for c, n in model.member_counts.items() if n < threshold)
    if dropped:
        logger.info("Dropping %s outlier clusters of class %s (fewer than %s members): %s",
                    len(dropped), model.class_id, threshold, dropped)
    dropped_set = set(dropped)
    model.assignment = {ref: (None if c in dropped_set else c) for ref, c in model.assignment.items()}
    model.member_counts = {c: n for c, n in model.member_counts.items() if c not in dropped_set}
    model.exemplars = {c: ex for c, ex in model.exemplars.items() if c not in dropped_set}
    model.dropped = sorted(set(model.dropped) | dropped_set)
    return model


def discover_concepts(
    class_id: int,
    model: ModelSpec,
    images: Dict[str, np.ndarray],
    seg_sets: Dict[str, SegmentationSet],
    policy: MaskingPolicy,
    m: int = DEFAULT_CONCEPTS,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
    min_members: Optional[int] = None,
) -> Tuple[List[Embedding], ConceptModel]:
    embeddings = extract_class_embeddings(model, images, seg_sets, policy, jobs)
    if len(embeddings) < m:
        logger.warning("Class %s has only %s segments; reducing %s clusters to %s",
                       class_id, len(embeddings), m, len(embeddings))
        m = len(embeddings)
    concept_model = kmeans(embeddings, m, seed=seed, max_iter=max_iter, class_id=class_id)
    return embeddings, drop_small_concepts(concept_model, min_members)


# ============= Semantic neighbors =============

def semantic_edges(model: ConceptModel, instance_segments: Sequence[SegmentRef]) -> NeighborGraph:
    """Connect segments of one instance and level that share a concept; players are list positions."""
    graph = NeighborGraph(len(instance_segments))
    groups: Dict[Tuple[str, str, int], List[int]] = {}
    for position, ref in enumerate(instance_segments):
        concept = model.concept_of(ref)
        if concept is None:
            continue
        groups.setdefault((ref.image_id, ref.level, concept), []).append(position)
    for positions in groups.values():
        for a_idx, a in enumerate(positions):
            for b in positions[a_idx + 1:]:
                graph.add_edge(a, b, EdgeKind.SEMANTIC)
    return graph


def level_refs(image_id: str, level: ResolutionLevel, segment_count: int) -> List[SegmentRef]:
    return [SegmentRef(image_id, level.value, sid) for sid in range(segment_count)]


def segment_pixel_mask(seg_set: SegmentationSet, refs: Sequence[SegmentRef]) -> np.ndarray:
    """Pixels covered by any of the given segments of this image, across levels."""
    levels = {level.value: level for level in seg_set.levels()}
    shape = next(iter(seg_set.maps.values())).shape
    pixels = np.zeros(shape, dtype=bool)
    by_level: Dict[str, List[int]] = {}
    for ref in refs:
        if ref.image_id == seg_set.image_id and ref.level in levels:
            by_level.setdefault(ref.level, []).append(ref.segment_id)
    for level_name, ids in by_level.items():
        pixels |= np.isin(seg_set.maps[levels[level_name]].labels, ids)
    return pixels


def concept_pixel_mask(seg_set: SegmentationSet, model: ConceptModel, concept_ids: Sequence[int]) -> np.ndarray:
    wanted = set(concept_ids)
    refs = [ref for ref in model.instance_refs(seg_set.image_id) if model.assignment[ref] in wanted]
    return segment_pixel_mask(seg_set, refs)


# ============= Persistence =============

def save_embeddings_csv(path: Path, embeddings: Sequence[Embedding]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = len(embeddings[0].vector) if embeddings else 0
    rows = [
        [e.segment_ref.image_id, e.segment_ref.level, e.segment_ref.segment_id, *e.vector.tolist()]
        for e in embeddings
    ]
    frame = pd.DataFrame(rows, columns=["image_id", "level", "segment_id"] + [f"e{d}" for d in range(dim)])
    frame.to_csv(path, index=False, float_format="%.10g")


def load_embeddings_csv(path: Path) -> List[Embedding]:
    frame = pd.read_csv(path, dtype={"image_id": str, "level": str})
    vector_cols = [c for c in frame.columns if c.startswith("e") and c[1:].isdigit()]
    if not vector_cols:
        raise FormatError(f"{path}: no embedding columns")
    vectors = frame[vector_cols].to_numpy(dtype=float)
    return [
        Embedding(vectors[i], SegmentRef(row.image_id, row.level, int(row.segment_id)))
        for i, row in enumerate(frame.itertuples(index=False))
    ]


def concept_model_to_dict(model: ConceptModel) -> dict:
    return {
        "class_id": model.class_id,
        "m": model.m,
        "centers": [[float(x) for x in row] for row in model.centers],
        "assignments": [
            {"image_id": r.image_id, "level": r.level, "segment_id": r.segment_id, "concept": c}
            for r, c in sorted(model.assignment.items())
        ],
        "member_counts": {str(c): n for c, n in sorted(model.member_counts.items())},
        "dropped": list(model.dropped),
        "inertia_history": [float(x) for x in model.inertia_history],
        "exemplars": {str(c): [list(r) for r in refs] for c, refs in sorted(model.exemplars.items())},
    }


def concept_model_from_dict(data: dict) -> ConceptModel:
    try:
        assignment = {
            SegmentRef(a["image_id"], a["level"], int(a["segment_id"])): a["concept"]
            for a in data["assignments"]
        }
        return ConceptModel(
            class_id=int(data["class_id"]),
            m=int(data["m"]),
            centers=np.asarray(data["centers"], dtype=float),
            assignment=assignment,
            member_counts={int(c): int(n) for c, n in data["member_counts"].items()},
            dropped=[int(c) for c in data.get("dropped", [])],
            inertia_history=[float(x) for x in data.get("inertia_history", [])],
            exemplars={int(c): [SegmentRef(r[0], r[1], int(r[2])) for r in refs]
                       for c, refs in data.get("exemplars", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"invalid concept model: {e}") from e


def save_concept_model(path: Path, model: ConceptModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(concept_model_to_dict(model), f, indent=2, sort_keys=True)


def load_concept_model(path: Path) -> ConceptModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Concept model not found at {path}; run 'discover' first")
    with path.open("r", encoding="utf-8") as f:
        return concept_model_from_dict(json.load(f))
