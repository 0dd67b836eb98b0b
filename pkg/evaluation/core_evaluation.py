"""
core_evaluation.py

End-to-end evaluation on the colored-blob toy dataset.

- Additive oracle: CONE-SHAP on linear_color games must equal the closed-form
  per-segment contributions (|error| <= 1e-9) for every segment.
- Localization: positive saliency of the tiny_mlp detector should sit on the blob.
- Concept ordering: keeping the most important concepts must classify at least
  as well as keeping the least important ones, and removing them must hurt
  at least as much.

Writes <workdir>/reports/toy_eval_metrics.json.

    python -m evaluation.core_evaluation
"""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from agents.coordinator import ClassCoordinator, dump_json
from common.config import RunConfig
from common.settings import configure_logging
from evaluation.curves import CurveMode, CurvePoint
from evaluation.oracle import AGREEMENT_TOLERANCE
from explain.attribution import attribute_instance
from explain.saliency import saliency
from games.shapley_engine import SamplerConfig
from imaging.dataset import Dataset
from imaging.segmentation import multi_resolution_segment
from imaging.toy_data import generate_toy_dataset
from models.image_game import additive_contributions
from models.masking import MaskingPolicy
from models.scorers import ModelSpec
from models.toy_models import CLASS_COLORS, blob_detector_mlp, toy_linear_color

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT_DIR / "output" / "toy_eval" / "data"
WORK_DIR = ROOT_DIR / "output" / "toy_eval" / "work"
METRICS_FILE = "toy_eval_metrics.json"

EVAL_IMAGES_PER_CLASS = 6
ORACLE_IMAGES = 5
LOCALIZATION_THRESHOLD = 0.5


def eval_config(workdir: Path = WORK_DIR, data: Path = DATA_DIR) -> RunConfig:
    return RunConfig(seed=0, k=5, M=1, clusters=6, top_k=3, workdir=str(workdir), data=str(data), jobs=1)


def load_or_generate(data: Path, per_class: int = EVAL_IMAGES_PER_CLASS) -> Dataset:
    if (data / "labels.json").exists():
        return Dataset.load(data)
    return generate_toy_dataset(data, per_class=per_class, seed=0)


def additive_oracle(dataset: Dataset, model: ModelSpec, config: RunConfig, images: int = ORACLE_IMAGES) -> Dict[str, Any]:
    """CONE-SHAP against the closed form on linear_color games, every level of a few images."""
    policy = MaskingPolicy.from_name(config.masking)
    cfg = SamplerConfig(k=config.k, M=config.M, seed=config.seed)
    worst = 0.0
    segments = 0
    for image_id in dataset.image_ids()[:images]:
        image = dataset.image(image_id)
        class_k = dataset.label(image_id)
        seg_set = multi_resolution_segment(image, image_id)
        table = attribute_instance(image, seg_set, model, class_k, cfg, policy)
        for level in seg_set.levels():
            labels = seg_set.maps[level].labels
            expected = additive_contributions(model, image, labels, class_k, policy)
            got = table.level_values(image_id, level, len(expected))
            worst = max(worst, float(np.max(np.abs(got - expected))))
            segments += len(expected)
    return {"images": images, "segments": segments, "max_abs_error": worst,
            "passed": worst <= AGREEMENT_TOLERANCE}


def saliency_on_blob(dataset: Dataset, coordinator: ClassCoordinator, image_ids: List[str]) -> Dict[str, float]:
    """Share of positive saliency mass inside the blob mask, per image."""
    shares = {}
    for image_id in image_ids:
        blob = dataset.blob_mask(image_id)
        if blob is None:
            continue
        state = coordinator.explain_instance(image_id, dataset.label(image_id))
        positive = np.clip(state["saliency"].scores, 0.0, None)
        total = float(positive.sum())
        shares[image_id] = float(positive[blob].sum()) / total if total > 0 else 0.0
    return shares


def first_point(points: List[CurvePoint], mode: CurveMode) -> float:
    return next(p.accuracy for p in points if p.mode == mode and p.top_k == 1)


def run_toy_evaluation(config: RunConfig = None) -> Dict[str, Any]:
    config = config or eval_config()
    dataset = load_or_generate(Path(config.data))
    colors = CLASS_COLORS[:len(dataset.class_ids())]

    print("=" * 80)
    print("CONE-SHAP TOY EVALUATION")
    print("=" * 80)
    print(f"\nDataset: {dataset.root} ({len(dataset)} images, {len(colors)} classes)")
    print(f"Workdir: {config.root}\n")

    metrics: Dict[str, Any] = {"config": config.report_dict()}

    print("-" * 80)
    print("Additive oracle (linear_color)")
    print("-" * 80)
    start = time.time()
    oracle = additive_oracle(dataset, toy_linear_color(colors), config)
    oracle["elapsed_sec"] = round(time.time() - start, 3)
    mark = "✓" if oracle["passed"] else "✗"
    print(f"  {mark} {oracle['segments']} segments, max |error| = {oracle['max_abs_error']:.3e}")
    metrics["additive_oracle"] = oracle

    print("-" * 80)
    print("Concept pipeline (tiny_mlp detector)")
    print("-" * 80)
    start = time.time()
    coordinator = ClassCoordinator(config, dataset, blob_detector_mlp(colors))
    report = coordinator.run(evaluate=True)
    elapsed = time.time() - start

    classes = {}
    ordering_ok = True
    for entry in report["classes"]:
        curves = [CurvePoint.from_dict(p) for p in entry.get("curves", [])]
        if not curves:
            continue
        ssc_most, ssc_least = first_point(curves, CurveMode.SSC_ADD), first_point(curves, CurveMode.LEAST_ADD)
        sdc_most, sdc_least = first_point(curves, CurveMode.SDC_REMOVE), first_point(curves, CurveMode.LEAST_REMOVE)
        ok = ssc_most >= ssc_least and sdc_most <= sdc_least
        ordering_ok = ordering_ok and ok
        mark = "✓" if ok else "✗"
        print(f"  {mark} class {entry['class_name']}: SSC@1 {ssc_most:.2f} vs least {ssc_least:.2f}, "
              f"SDC@1 {sdc_most:.2f} vs least {sdc_least:.2f}")
        classes[entry["class_name"]] = {
            "baseline_accuracy": entry["baseline_accuracy"],
            "ssc_top1": ssc_most, "ssc_least1": ssc_least,
            "sdc_top1": sdc_most, "sdc_least1": sdc_least,
            "criteria": entry.get("criteria"),
        }
    if report["warnings"]:
        print(f"  ⚠ {len(report['warnings'])} undefined metrics")

    shares = saliency_on_blob(dataset, coordinator, [ids[0] for ids in
                                                     (dataset.image_ids(c) for c in dataset.class_ids())])
    mean_share = float(np.mean(list(shares.values()))) if shares else 0.0
    mark = "✓" if mean_share >= LOCALIZATION_THRESHOLD else "✗"
    print(f"  {mark} positive saliency on blob: {mean_share:.2f}")

    metrics["concept_pipeline"] = {
        "status": report["status"],
        "ordering_passed": ordering_ok,
        "classes": classes,
        "saliency_on_blob": shares,
        "mean_saliency_on_blob": mean_share,
        "warnings": report["warnings"],
        "elapsed_sec": round(elapsed, 2),
    }

    path = config.path("reports") / METRICS_FILE
    dump_json(path, metrics)

    print("=" * 80)
    print(f"Metrics written to {path}")
    print("=" * 80)
    return metrics


def main() -> None:
    configure_logging()
    metrics = run_toy_evaluation()
    print(json.dumps({
        "additive_oracle": metrics["additive_oracle"]["passed"],
        "concept_ordering": metrics["concept_pipeline"]["ordering_passed"],
        "mean_saliency_on_blob": round(metrics["concept_pipeline"]["mean_saliency_on_blob"], 3),
    }, indent=2))


if __name__ == "__main__":
    main()
