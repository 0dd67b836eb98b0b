"""
Built-in black-box scorers.

- linear_color: logit_k = sum over pixels of <w_k, rgb/255> + b_k, at native resolution.
- tiny_mlp: box-downsample to input_size x input_size, flatten (row-major HWC, /255),
  hidden = W1 x + b1, logits = W2 tanh(hidden) + b2. The hidden affine output is
  the representation layer used for concept embeddings.
- adapter: an external process speaking the stdio protocol in models/adapter.py.

Weight files are JSON:
    {"kind": "tiny_mlp", "input_size": 16, "class_count": 5,
     "shapes": {"w1": [32, 768], "b1": [32], "w2": [5, 32], "b2": [5]},
     "data": {"w1": [...], "b1": [...], "w2": [...], "b2": [...]}}
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from common.errors import CapabilityError, FormatError
from imaging.image_io import resize_bicubic, resize_box

logger = logging.getLogger(__name__)

DEFAULT_INPUT_SIZE = 16
DEFAULT_HIDDEN_WIDTH = 32


class ModelKind(str, Enum):
    LINEAR_COLOR = "linear_color"
    TINY_MLP = "tiny_mlp"
    ADAPTER = "adapter"


REQUIRED_PARAMS = {
    ModelKind.LINEAR_COLOR: ("w", "b"),
    ModelKind.TINY_MLP: ("w1", "b1", "w2", "b2"),
    ModelKind.ADAPTER: (),
}


@dataclass
class Prediction:
    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if not np.all(np.isfinite(self.logits)):
            raise FormatError("prediction contains non-finite logits")

    def argmax(self) -> int:
        return int(np.argmax(self.logits))

    def predicted_class(self) -> Optional[int]:
        """The argmax class, or None when several classes share the top logit."""
        top = self.logits.max()
        if np.count_nonzero(self.logits == top) > 1:
            return None
        return self.argmax()


@dataclass
class ModelSpec:
    kind: ModelKind
    class_count: int
    input_size: int = DEFAULT_INPUT_SIZE
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    weights_path: Optional[Path] = None
    command: Optional[List[str]] = None
    adapter: Optional[object] = None

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        if self.class_count < 2:
            raise FormatError(f"a model needs at least 2 classes, got {self.class_count}")
        self._validate_params()

    @property
    def representation(self) -> bool:
        return self.kind == ModelKind.TINY_MLP

    def _validate_params(self) -> None:
        for name in REQUIRED_PARAMS[self.kind]:
            if name not in self.params:
                raise FormatError(f"{self.kind.value} weights missing '{name}'")
            self.params[name] = np.asarray(self.params[name], dtype=float)
            if not np.all(np.isfinite(self.params[name])):
                raise FormatError(f"{self.kind.value} weight '{name}' has non-finite entries")

        c = self.class_count
        if self.kind == ModelKind.LINEAR_COLOR:
            expected = {"w": (c, 3), "b": (c,)}
        elif self.kind == ModelKind.TINY_MLP:
            hidden = self.params["w1"].shape[0] if self.params["w1"].ndim == 2 else -1
            d = self.input_size * self.input_size * 3
            expected = {"w1": (hidden, d), "b1": (hidden,), "w2": (c, hidden), "b2": (c,)}
        else:
            expected = {}
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise FormatError(
                    f"{self.kind.value} weight '{name}' has shape {self.params[name].shape}, expected {shape}"
                )


# ============= Inference =============

def _tiny_mlp_hidden(model: ModelSpec, image: np.ndarray) -> np.ndarray:
    x = resize_box(image, model.input_size).reshape(-1) / 255.0
    return model.params["w1"] @ x + model.params["b1"]


def predict(model: ModelSpec, image: np.ndarray) -> Prediction:
    """Class logits (pre-softmax) for one RGB image."""
    if model.kind == ModelKind.LINEAR_COLOR:
        color_mass = image.reshape(-1, 3).astype(float).sum(axis=0) / 255.0
        return Prediction(model.params["w"] @ color_mass + model.params["b"])
    if model.kind == ModelKind.TINY_MLP:
        hidden = np.tanh(_tiny_mlp_hidden(model, image))
        return Prediction(model.params["w2"] @ hidden + model.params["b2"])

    if model.adapter is None:
        raise CapabilityError("adapter model has no running adapter; call attach_adapter() first")
    prediction = model.adapter.predict(image)
    if len(prediction.logits) != model.class_count:
        raise FormatError(
            f"adapter returned {len(prediction.logits)} logits for a {model.class_count}-class model"
        )
    return prediction


def represent(model: ModelSpec, image: np.ndarray) -> np.ndarray:
    """Representation-layer output h(x) for an image already at input size."""
    if not model.representation:
        raise CapabilityError(f"{model.kind.value} model has no representation layer")
    return _tiny_mlp_hidden(model, image)


def image_embedding(model: ModelSpec, image: np.ndarray) -> np.ndarray:
    """h(x) of a whole image, through the same bicubic path used for segments."""
    return represent(model, resize_bicubic(image, model.input_size))


# ============= Weight files =============

def load_model(path: Path) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found at {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e

    try:
        kind = ModelKind(payload["kind"])
        class_count = int(payload["class_count"])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: model file needs 'kind' and 'class_count': {e}") from e
    input_size = int(payload.get("input_size", DEFAULT_INPUT_SIZE))

    if kind == ModelKind.ADAPTER:
        command = payload.get("command")
        if not command:
            raise FormatError(f"{path}: adapter model needs a 'command' list")
        return ModelSpec(kind, class_count, input_size, weights_path=path, command=list(command))

    shapes = payload.get("shapes", {})
    data = payload.get("data", {})
    if isinstance(data, list):
        data = dict(zip(shapes.keys(), data))
    params = {}
    for name, shape in shapes.items():
        if name not in data:
            raise FormatError(f"{path}: no data for weight '{name}'")
        flat = np.asarray(data[name], dtype=float)
        if flat.size != int(np.prod(shape)):
            raise FormatError(f"{path}: weight '{name}' has {flat.size} values for shape {shape}")
        params[name] = flat.reshape(shape)
    model = ModelSpec(kind, class_count, input_size, params=params, weights_path=path)
    logger.info("Loaded %s model from %s (%s classes)", kind.value, path, class_count)
    return model


def save_model(path: Path, model: ModelSpec) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "kind": model.kind.value,
        "class_count": model.class_count,
        "input_size": model.input_size,
    }
    if model.kind == ModelKind.ADAPTER:
        payload["command"] = list(model.command or [])
    else:
        payload["shapes"] = {k: list(v.shape) for k, v in model.params.items()}
        payload["data"] = {k: [float(x) for x in v.ravel()] for k, v in model.params.items()}
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f)


def linear_color_model(w: np.ndarray, b: np.ndarray) -> ModelSpec:
    w = np.asarray(w, dtype=float)
    return ModelSpec(ModelKind.LINEAR_COLOR, class_count=w.shape[0], params={"w": w, "b": b})


def tiny_mlp_model(w1, b1, w2, b2, input_size: int = DEFAULT_INPUT_SIZE) -> ModelSpec:
    w2 = np.asarray(w2, dtype=float)
    return ModelSpec(
        ModelKind.TINY_MLP,
        class_count=w2.shape[0],
        input_size=input_size,
        params={"w1": w1, "b1": b1, "w2": w2, "b2": b2},
    )
