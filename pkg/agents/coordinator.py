"""
ClassCoordinator - orchestrates the concept-attribution pipeline for a dataset.

Deterministic orchestrator:
  - Segment every image at three resolutions (cached under segments/).
  - Discover concepts per class (concepts/, embeddings/).
  - Spawn one InstanceExplainer per image and aggregate the class-wise
    concept scores (attributions/, reports/).
  - Evaluate the scores: criteria and SSC/SDC curves (reports/).
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

from agents.instance_explainer import InstanceExplainer
from common.config import RunConfig
from common.errors import ConeShapError
from concepts.concept_discovery import (
    ConceptModel,
    discover_concepts,
    load_concept_model,
    load_embeddings_csv,
    save_concept_model,
    save_embeddings_csv,
)
from evaluation.criteria import CriteriaReport, evaluate_criteria, save_criteria
from evaluation.curves import CurvePoint, baseline_accuracy, save_curves_csv, ssc_sdc_curves
from explain.attribution import SegmentScoreTable
from explain.concept_scores import ConceptScore, class_concept_scores, load_concept_scores, save_concept_scores
from explain.saliency import save_saliency_png
from imaging.dataset import Dataset
from imaging.segmentation import (
    ResolutionLevel,
    SegmentationSet,
    load_segmentation,
    multi_resolution_segment,
    save_segmentation,
    segmentation_matches,
)
from models.masking import MaskingPolicy
from models.scorers import ModelSpec, image_embedding

logger = logging.getLogger(__name__)


def dump_json(path: Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


class ClassCoordinator:
    """
    ClassCoordinator runs the pipeline class by class.

    Responsibilities:
      - Load (or compute) the segmentation of every image.
      - Discover concepts for each class.
      - Spawn one InstanceExplainer per class image and collect their results.
      - Aggregate class-wise concept scores and evaluate them.
    """

    def __init__(
        self,
        config: RunConfig,
        dataset: Dataset,
        model: ModelSpec,
        embedding_model: Optional[ModelSpec] = None,
    ):
        self.config = config
        self.dataset = dataset
        self.model = model
        # representation layer for concept discovery and coherency; the explained model when omitted
        self.embedding_model = embedding_model if embedding_model is not None else model
        self.policy = MaskingPolicy.from_name(config.masking)
        self.targets = dict(zip(ResolutionLevel, config.resolutions))

        # State
        self.seg_sets: Dict[str, SegmentationSet] = {}
        self.concept_models: Dict[int, ConceptModel] = {}
        self.instance_explainers: Dict[str, InstanceExplainer] = {}
        self.results: Dict[str, Dict] = {}

        logger.info("=" * 80)
        logger.info("Coordinator initialized (deterministic orchestrator)")
        logger.info("  Data: %s (%s images)", dataset.root, len(dataset))
        logger.info("  Model: %s, %s classes", model.kind.value, model.class_count)
        logger.info("  Embedding model: %s", self.embedding_model.kind.value)
        logger.info("  Workdir: %s", config.root)
        logger.info("  k=%s M=%s seed=%s masking=%s ablate=%s",
                    config.k, config.M, config.seed, config.masking, config.ablate)
        logger.info("=" * 80)

    # ============= Helper methods =============

    def class_ids(self) -> List[int]:
        if self.config.class_id is not None:
            return [self.config.class_id]
        return self.dataset.class_ids()

    def _class_image_ids(self, class_id: int) -> List[str]:
        ids = self.dataset.image_ids(class_id)
        if not ids:
            raise ConeShapError(f"no images labelled with class {class_id} in {self.dataset.root}")
        return ids

    # ============= Phase 1: segmentation =============

    def segmentation(self, image_id: str) -> SegmentationSet:
        """Load cached label maps when present, otherwise segment and cache."""
        if image_id in self.seg_sets:
            return self.seg_sets[image_id]
        image = self.dataset.image(image_id)
        folder = self.config.path("segments")
        try:
            seg_set = load_segmentation(folder, image_id, image)
            if not segmentation_matches(seg_set, image, self.targets,
                                        self.config.compactness, self.config.iterations):
                logger.info("[%s] cached label maps use other segmentation settings; re-segmenting", image_id)
                raise FileNotFoundError(image_id)
        except FileNotFoundError:
            seg_set = multi_resolution_segment(
                image, image_id, self.targets, self.config.compactness, self.config.iterations
            )
            save_segmentation(folder, seg_set)
        self.seg_sets[image_id] = seg_set
        return seg_set

    def segment_images(self, image_ids: Optional[List[str]] = None) -> Dict[str, SegmentationSet]:
        image_ids = self.dataset.image_ids() if image_ids is None else image_ids
        logger.info("Segmenting %s images...", len(image_ids))
        return {image_id: self.segmentation(image_id) for image_id in image_ids}

    # ============= Phase 2: concept discovery =============

    def discover(self, class_id: int) -> ConceptModel:
        ids = self._class_image_ids(class_id)
        seg_sets = self.segment_images(ids)
        logger.info("=" * 80)
        logger.info("CONCEPT DISCOVERY: class %s (%s images)", class_id, len(ids))
        logger.info("=" * 80)
        embeddings, concept_model = discover_concepts(
            class_id,
            self.embedding_model,
            self.dataset.images(ids),
            seg_sets,
            self.policy,
            m=self.config.clusters,
            seed=self.config.seed,
            max_iter=self.config.max_iter,
            jobs=self.config.jobs,
        )
        save_embeddings_csv(self.config.path("embeddings") / f"class{class_id}.csv", embeddings)
        save_concept_model(self.config.path("concepts") / f"class{class_id}.json", concept_model)
        logger.info("Class %s: %s concepts kept, %s dropped",
                    class_id, len(concept_model.concept_ids()), len(concept_model.dropped))
        self.concept_models[class_id] = concept_model
        return concept_model

    def concept_model(self, class_id: int) -> ConceptModel:
        if class_id not in self.concept_models:
            path = self.config.path("concepts") / f"class{class_id}.json"
            self.concept_models[class_id] = load_concept_model(path)
        return self.concept_models[class_id]

    # ============= Phase 3: explanation =============

    def spawn_instance_explainers(self, class_id: int, concept_model: Optional[ConceptModel]) -> bool:
        """Instantiate an InstanceExplainer for each image of the class."""
        ids = self._class_image_ids(class_id)
        for image_id in ids:
            self.instance_explainers[image_id] = InstanceExplainer(
                image_id=image_id,
                image=self.dataset.image(image_id),
                seg_set=self.segmentation(image_id),
                model=self.model,
                class_id=class_id,
                config=self.config,
                concept_model=concept_model,
            )
        logger.info("Spawned %s InstanceExplainers for class %s", len(ids), class_id)
        return True

    def run_instances(self, image_ids: List[str]) -> Dict[str, Dict]:
        results: Dict[str, Dict] = {}
        for image_id in image_ids:
            explainer = self.instance_explainers.get(image_id)
            if explainer is None:
                continue
            logger.info("[%s] Starting InstanceExplainer...", image_id)
            try:
                state = explainer.run()
                self._write_instance(state)
                results[image_id] = state
                logger.info("[%s] Complete. %s segments attributed", image_id, state["segments"])
            except (ConeShapError, OSError, ValueError) as e:
                logger.error("[%s] Error during explanation: %s", image_id, e)
                results[image_id] = {"image_id": image_id, "status": "ERROR", "error": str(e)}
        self.results.update(results)
        return results

    def _write_instance(self, state: Dict) -> None:
        image_id = state["image_id"]
        state["table"].to_csv(self.config.path("attributions") / f"{image_id}.csv")
        save_saliency_png(self.config.path("reports") / f"{image_id}_saliency.png", state["saliency"])
        dump_json(self.config.path("reports") / f"{image_id}_instance.json", {
            "image_id": image_id,
            "class_id": state["class_id"],
            "normalized": self.config.normalize,
            "importances": {str(c): v for c, v in state["importances"].items()},
            "top_concepts": [{"concept_id": c, "score": v} for c, v in state["top_concepts"]],
        })

    def explain_instance(self, image_id: str, class_id: int) -> Dict:
        concept_model = None
        path = self.config.path("concepts") / f"class{class_id}.json"
        if path.exists():
            concept_model = self.concept_model(class_id)
        explainer = InstanceExplainer(image_id, self.dataset.image(image_id), self.segmentation(image_id),
                                      self.model, class_id, self.config, concept_model)
        state = explainer.run()
        self._write_instance(state)
        return state

    def explain_class(self, class_id: int) -> List[ConceptScore]:
        concept_model = self.concept_model(class_id)
        ids = self._class_image_ids(class_id)
        logger.info("=" * 80)
        logger.info("EXPLAINING CLASS %s (%s instances)", class_id, len(ids))
        logger.info("=" * 80)
        self.spawn_instance_explainers(class_id, concept_model)
        results = self.run_instances(ids)

        tables = [r["table"] for r in results.values() if r.get("status") == "OK"]
        table = SegmentScoreTable.concat(tables)
        table.to_csv(self.config.path("attributions") / f"class{class_id}.csv")
        scores = class_concept_scores(table, concept_model)
        save_concept_scores(self.config.path("reports") / f"class{class_id}_scores.json", class_id, scores)

        errors = sorted(i for i, r in results.items() if r.get("status") == "ERROR")
        if errors:
            logger.warning("Class %s: %s instances failed: %s", class_id, len(errors), errors)
        if scores:
            logger.info("Class %s top concept: %s (SC=%.6g)", class_id, scores[0].concept_id, scores[0].score)
        return scores

    # ============= Phase 4: evaluation =============

    def class_scores(self, class_id: int) -> List[ConceptScore]:
        return load_concept_scores(self.config.path("reports") / f"class{class_id}_scores.json")

    def evaluate_class(self, class_id: int) -> Dict:
        concept_model = self.concept_model(class_id)
        scores = self.class_scores(class_id)
        ids = self._class_image_ids(class_id)
        images = self.dataset.images(ids)
        seg_sets = self.segment_images(ids)

        embeddings_path = self.config.path("embeddings") / f"class{class_id}.csv"
        if not embeddings_path.exists():
            raise FileNotFoundError(f"Embeddings not found at {embeddings_path}; run 'discover' first")
        embeddings = {e.segment_ref: e.vector for e in load_embeddings_csv(embeddings_path)}
        concepts = {c.id: c for c in concept_model.concepts()}

        report: Optional[CriteriaReport] = None
        if self.embedding_model.representation:
            image_embeddings = {i: image_embedding(self.embedding_model, images[i]) for i in ids}
            report = evaluate_criteria(scores, concepts, embeddings, image_embeddings, images, seg_sets,
                                       self.model, class_id, self.policy, k=self.config.top_k)
            save_criteria(self.config.path("reports"), class_id, report)
        else:
            logger.warning("Class %s: %s embedding model has no representation layer; criteria skipped",
                           class_id, self.embedding_model.kind.value)

        curves = self.class_curves(class_id, scores)
        save_curves_csv(self.config.path("reports") / f"curves_class{class_id}.csv", curves)
        return {
            "class_id": class_id,
            "criteria": report,
            "curves": curves,
            "baseline_accuracy": baseline_accuracy(images, self.dataset.labels(ids), self.model),
        }

    def class_curves(self, class_id: int, scores: List[ConceptScore]) -> List[CurvePoint]:
        ids = self._class_image_ids(class_id)
        return ssc_sdc_curves(scores, self.concept_model(class_id), self.dataset.images(ids),
                              self.segment_images(ids), self.dataset.labels(ids), self.model,
                              self.policy, jobs=self.config.jobs)

    # ============= Full pipeline =============

    def run(self, evaluate: bool = True) -> Dict:
        summary: Dict[int, Dict] = {}
        for class_id in self.class_ids():
            self.discover(class_id)
            scores = self.explain_class(class_id)
            entry = {"scores": scores}
            if evaluate:
                entry.update(self.evaluate_class(class_id))
            summary[class_id] = entry
        return self.generate_report(summary)

    def generate_report(self, summary: Dict[int, Dict]) -> Dict:
        """Summarise per-class results into a JSON-serializable report."""
        classes = []
        warnings: List[str] = []
        for class_id, entry in sorted(summary.items()):
            item = {
                "class_id": class_id,
                "class_name": (self.dataset.class_names[class_id]
                               if class_id < len(self.dataset.class_names) else str(class_id)),
                "concepts": [s.to_dict() for s in entry.get("scores", [])],
            }
            criteria: Optional[CriteriaReport] = entry.get("criteria")
            if criteria is not None:
                item["criteria"] = criteria.to_dict()
                warnings.extend(f"class {class_id}: {w}" for w in criteria.warnings)
            curves: List[CurvePoint] = entry.get("curves", [])
            if curves:
                item["curves"] = [p.to_dict() for p in curves]
                item["baseline_accuracy"] = entry["baseline_accuracy"]
            classes.append(item)

        errors = sorted(i for i, r in self.results.items() if r.get("status") == "ERROR")
        report = {
            "config": self.config.report_dict(),
            "classes": classes,
            "instance_errors": [{"image_id": i, "error": self.results[i]["error"]} for i in errors],
            "warnings": warnings,
            "status": "ERROR" if errors else ("WARN" if warnings else "OK"),
        }
        dump_json(self.config.path("reports") / "class_report.json", report)
        return report
