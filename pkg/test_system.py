import json
import logging
from pathlib import Path

from agents.coordinator import ClassCoordinator
from common.config import RunConfig
from imaging.dataset import Dataset
from models.scorers import load_model
from scripts.setup_toy_data import setup_toy_data

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(message)s')
logger = logging.getLogger(__name__)

SMOKE_DATA = Path("output") / "smoke" / "toy_blobs"


def run_full_test():
    print("\n========== INITIALIZING CONE-SHAP PIPELINE ==========\n")

    # 1. Small toy dataset (written once, reused afterwards)
    if not (SMOKE_DATA / "run.json").exists():
        print("--> Writing toy dataset...")
        setup_toy_data(SMOKE_DATA, per_class=4)
    dataset = Dataset.load(SMOKE_DATA)
    model = load_model(SMOKE_DATA / "models" / "tiny_mlp.json")

    # 2. The dataset's own run settings (two concepts per class)
    config = RunConfig.load(SMOKE_DATA / "run.json").with_overrides(workdir="output/smoke", data=str(SMOKE_DATA))

    # 3. Discover, explain and evaluate every class
    print(f"--> Running pipeline on {len(dataset)} images...")
    report = ClassCoordinator(config, dataset, model).run(evaluate=True)

    # 4. Print summary
    print("\n========== CLASS REPORT ==========\n")
    for entry in report["classes"]:
        top = entry["concepts"][0] if entry["concepts"] else None
        print(json.dumps({"class": entry["class_name"], "top_concept": top,
                          "baseline_accuracy": entry.get("baseline_accuracy")}, indent=2))

    if report["status"] == "ERROR":
        print(f"\n❌ {len(report['instance_errors'])} instances failed")
    elif report["warnings"]:
        print(f"\n⚠️ Finished with {len(report['warnings'])} undefined metrics")
    else:
        print("\n✅ SUCCESS: every class explained and evaluated")


if __name__ == "__main__":
    run_full_test()
