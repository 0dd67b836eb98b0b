import sys
from pathlib import Path

import numpy as np
import pytest

from common.config import RunConfig
from imaging.segmentation import multi_resolution_segment, ResolutionLevel
from imaging.toy_data import draw_blob_image, generate_toy_dataset, image_rng
from models.scorers import save_model
from models.toy_models import CLASS_COLORS, blob_detector_mlp, toy_linear_color

ROOT_DIR = Path(__file__).resolve().parents[1]
ECHO_ADAPTER = ROOT_DIR / "models" / "echo_adapter.py"

SMALL_TARGETS = {ResolutionLevel.LARGE: 4, ResolutionLevel.MEDIUM: 6, ResolutionLevel.SMALL: 9}


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory) -> Path:
    """Two classes x four images, plus both reference models under models/."""
    root = tmp_path_factory.mktemp("toy_blobs")
    generate_toy_dataset(root, classes=2, per_class=4, seed=0)
    save_model(root / "models" / "tiny_mlp.json", blob_detector_mlp(CLASS_COLORS[:2]))
    save_model(root / "models" / "linear_color.json", toy_linear_color(CLASS_COLORS[:2]))
    return root


@pytest.fixture
def detector():
    return blob_detector_mlp(CLASS_COLORS)


@pytest.fixture
def linear_model():
    return toy_linear_color(CLASS_COLORS)


@pytest.fixture
def blob_image():
    image, _ = draw_blob_image(image_rng(0, 0, 0), CLASS_COLORS[0])
    return image


@pytest.fixture
def blob_and_mask():
    return draw_blob_image(image_rng(0, 2, 1), CLASS_COLORS[2])


@pytest.fixture
def small_seg_set(blob_image):
    return multi_resolution_segment(blob_image, "red_000", SMALL_TARGETS)


@pytest.fixture
def small_config(tmp_path, toy_root) -> RunConfig:
    return RunConfig(
        seed=0, k=3, M=1, resolutions=[4, 6, 9], clusters=3, top_k=2,
        workdir=str(tmp_path / "work"), data=str(toy_root), jobs=1,
    )


@pytest.fixture
def echo_command():
    def command(*args):
        return [sys.executable, str(ECHO_ADAPTER), *args]
    return command


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
