"""
InstanceExplainer - explains one image for one class.

Runs CONE-SHAP over every resolution level, builds the saliency map and the
instance-wise concept importances. Spawned by ClassCoordinator, one per image.
"""

import logging
from typing import Dict, Optional

import numpy as np

from common.config import RunConfig
from concepts.concept_discovery import ConceptModel
from explain.attribution import attribute_instance
from explain.concept_scores import instance_concept_importance, top_instance_concepts
from explain.saliency import saliency
from games.shapley_engine import RestrictionMode, SamplerConfig
from imaging.segmentation import SegmentationSet
from models.masking import MaskingPolicy
from models.scorers import ModelSpec

logger = logging.getLogger(__name__)


class InstanceExplainer:
    def __init__(
        self,
        image_id: str,
        image: np.ndarray,
        seg_set: SegmentationSet,
        model: ModelSpec,
        class_id: int,
        config: RunConfig,
        concept_model: Optional[ConceptModel] = None,
    ):
        self.image_id = image_id
        self.image = image
        self.seg_set = seg_set
        self.model = model
        self.class_id = class_id
        self.config = config
        self.concept_model = concept_model
        if concept_model is not None and not concept_model.instance_refs(image_id):
            logger.warning("[%s] not part of the concept model of class %s; physical neighbors only",
                           image_id, concept_model.class_id)
            self.concept_model = None

    def run(self) -> Dict:
        cfg = self.config
        table = attribute_instance(
            self.image,
            self.seg_set,
            self.model,
            self.class_id,
            SamplerConfig(k=cfg.k, M=cfg.M, seed=cfg.seed),
            MaskingPolicy.from_name(cfg.masking),
            concept_model=self.concept_model,
            ablate=cfg.ablate,
            mode=RestrictionMode(cfg.restriction),
            keep_only=cfg.keep_only,
            jobs=cfg.jobs,
        )
        saliency_map = saliency(table, self.seg_set)

        importances: Dict[int, float] = {}
        if self.concept_model is not None:
            importances = instance_concept_importance(table, self.concept_model, self.image_id)
        top = top_instance_concepts(importances, cfg.top_k, normalize=cfg.normalize)

        return {
            "image_id": self.image_id,
            "class_id": self.class_id,
            "status": "OK",
            "segments": len(table),
            "table": table,
            "saliency": saliency_map,
            "importances": importances,
            "top_concepts": top,
        }
