"""
Per-segment CONE-SHAP attribution of one image at every resolution level.

Each level is its own game (players = that level's segments) over the
physical adjacency graph merged with same-concept semantic edges.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from common.errors import DomainError, FormatError
from concepts.concept_discovery import ConceptModel, SegmentRef, level_refs, semantic_edges
from games.coalition_game import Game
from games.neighbor_graph import EdgeKind, NeighborGraph
from games.shapley_engine import Method, RestrictionMode, SamplerConfig, cone_shap_all
from imaging.segmentation import LabelMap, ResolutionLevel, SegmentationSet, adjacency
from models.image_game import build_game
from models.masking import MaskingPolicy
from models.scorers import ModelSpec

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["image_id", "level", "segment_id", "value", "method", "seed", "k", "M"]

ABLATIONS = {
    "no-physical": EdgeKind.PHYSICAL,
    "no-semantic": EdgeKind.SEMANTIC,
}

GameBuilder = Callable[[LabelMap], Game]


@dataclass
class SegmentScoreTable:
    """CONE-SHAP values keyed by (image_id, level, segment_id)."""

    frame: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in ("image_id", "level", "segment_id", "value") if c not in self.frame.columns]
        if missing:
            raise FormatError(f"score table lacks columns {missing}")
        if not np.all(np.isfinite(self.frame["value"].to_numpy(dtype=float))):
            raise FormatError("score table contains non-finite values")

    @classmethod
    def empty(cls) -> "SegmentScoreTable":
        return cls(pd.DataFrame(columns=TABLE_COLUMNS))

    @classmethod
    def concat(cls, tables: Sequence["SegmentScoreTable"]) -> "SegmentScoreTable":
        frames = [t.frame for t in tables if len(t.frame)]
        if not frames:
            return cls.empty()
        return cls(pd.concat(frames, ignore_index=True))

    def __len__(self) -> int:
        return len(self.frame)

    def image_ids(self) -> List[str]:
        return sorted(self.frame["image_id"].unique().tolist())

    def for_image(self, image_id: str) -> "SegmentScoreTable":
        return SegmentScoreTable(self.frame[self.frame["image_id"] == image_id].reset_index(drop=True))

    def level_values(self, image_id: str, level: ResolutionLevel, segment_count: int) -> np.ndarray:
        """Values of one level in segment-id order; every segment must be present."""
        rows = self.frame[(self.frame["image_id"] == image_id) & (self.frame["level"] == level.value)]
        values = np.full(segment_count, np.nan)
        values[rows["segment_id"].to_numpy(dtype=int)] = rows["value"].to_numpy(dtype=float)
        if np.isnan(values).any():
            raise DomainError(f"score table incomplete for {image_id} at level {level.value}")
        return values

    def values_by_ref(self) -> Dict[SegmentRef, float]:
        return {
            SegmentRef(row.image_id, row.level, int(row.segment_id)): float(row.value)
            for row in self.frame.itertuples(index=False)
        }

    def scaled(self, factor: float) -> "SegmentScoreTable":
        frame = self.frame.copy()
        frame["value"] = frame["value"].astype(float) * factor
        return SegmentScoreTable(frame)

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = self.frame.sort_values(["image_id", "level", "segment_id"], kind="stable")
        frame.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: Path) -> "SegmentScoreTable":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Score table not found at {path}")
        frame = pd.read_csv(path, dtype={"image_id": str, "level": str})
        return cls(frame)


def image_stream(image_id: str, level: ResolutionLevel) -> tuple:
    """RNG stream for one (image, level): stable across runs and worker counts."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return (int.from_bytes(digest[:4], "big"), list(ResolutionLevel).index(level))


def level_graph(
    seg_set: SegmentationSet,
    level: ResolutionLevel,
    concept_model: Optional[ConceptModel] = None,
    ablate: Optional[str] = None,
) -> NeighborGraph:
    """Physical adjacency plus semantic edges for one level, optionally ablated."""
    label_map = seg_set.maps[level]
    graph = adjacency(label_map)
    if concept_model is not None:
        refs = level_refs(seg_set.image_id, level, label_map.segment_count)
        graph = graph.union(semantic_edges(concept_model, refs))
    if ablate:
        if ablate not in ABLATIONS:
            raise DomainError(f"unknown ablation {ablate!r}; expected one of {sorted(ABLATIONS)}")
        graph = graph.without(ABLATIONS[ablate])
    return graph


def attribute_instance(
    image: np.ndarray,
    seg_set: SegmentationSet,
    model: ModelSpec,
    class_k: int,
    cfg: SamplerConfig,
    policy: MaskingPolicy,
    concept_model: Optional[ConceptModel] = None,
    ablate: Optional[str] = None,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    keep_only: bool = False,
    jobs: int = 1,
    game_builder: Optional[GameBuilder] = None,
) -> SegmentScoreTable:
    """CONE-SHAP value of every segment at every level of one image."""
    image_id = seg_set.image_id
    policy = policy.resolve(image)
    rows = []
    for level in seg_set.levels():
        label_map = seg_set.maps[level]
        if game_builder is not None:
            game = game_builder(label_map)
        else:
            game = build_game(model, image, label_map.labels, class_k, policy,
                              keep_only=keep_only, name=f"{image_id}/{level.value}")
        graph = level_graph(seg_set, level, concept_model, ablate)
        vector = cone_shap_all(game, graph, cfg, mode, stream=image_stream(image_id, level), jobs=jobs)
        logger.info("[%s] %s level: %s segments, %s edges, %s model evaluations",
                    image_id, level.value, game.player_count, graph.edge_count(), vector.evals_used)
        for sid, value in enumerate(vector.values):
            rows.append([image_id, level.value, sid, float(value), Method.CONE_SHAP.value, cfg.seed, cfg.k, cfg.M])
    return SegmentScoreTable(pd.DataFrame(rows, columns=TABLE_COLUMNS))
