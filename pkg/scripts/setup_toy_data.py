"""
Writes the colored-blob toy dataset, its two reference models and its run.json
to mock_db/toy_blobs.

    python scripts/setup_toy_data.py [--per-class N] [--seed S]
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).resolve().parents[1]))

from common.settings import configure_logging  # noqa: E402
from imaging.toy_data import TOY_IMAGES_PER_CLASS, generate_toy_dataset, write_toy_config  # noqa: E402
from models.scorers import save_model  # noqa: E402
from models.toy_models import CLASS_COLORS, blob_detector_mlp, toy_linear_color  # noqa: E402

logger = logging.getLogger(__name__)

TOY_ROOT = Path(__file__).resolve().parents[1] / "mock_db" / "toy_blobs"


def setup_toy_data(root: Path = TOY_ROOT, per_class: int = TOY_IMAGES_PER_CLASS, seed: int = 0) -> Path:
    dataset = generate_toy_dataset(root, per_class=per_class, seed=seed)
    models = dataset.root / "models"
    save_model(models / "tiny_mlp.json", blob_detector_mlp(CLASS_COLORS))
    save_model(models / "linear_color.json", toy_linear_color(CLASS_COLORS))
    logger.info("Models written to %s", models)
    logger.info("Run configuration written to %s", write_toy_config(dataset.root))
    return dataset.root


if __name__ == "__main__":
    configure_logging()
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--per-class", type=int, default=TOY_IMAGES_PER_CLASS)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = setup_toy_data(per_class=args.per_class, seed=args.seed)
    print(f"\n✅ Toy dataset ready at {root}")
    print(f"   Next: python -m cli.main segment --data {root}")
