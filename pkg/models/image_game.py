"""
The image game: segments of one label map are the players.

Removal semantics (default): v(S) = g_k(x) - g_k(x with S masked), so v(empty) = 0
and v({i}) is the occlusion drop of segment i.
keep_only semantics (ablation): v(S) = g_k(x with everything outside S masked)
- g_k(x fully masked).
"""

import logging

import numpy as np

from common.errors import CapabilityError, DomainError
from games.coalition_game import Coalition, Game
from models.masking import MaskingPolicy, mask
from models.scorers import ModelKind, ModelSpec, predict

logger = logging.getLogger(__name__)


def build_game(
    model: ModelSpec,
    image: np.ndarray,
    labels: np.ndarray,
    class_k: int,
    policy: MaskingPolicy,
    keep_only: bool = False,
    name: str = "image",
) -> Game:
    if class_k < 0 or class_k >= model.class_count:
        raise DomainError(f"class {class_k} out of range for a {model.class_count}-class model")
    policy = policy.resolve(image)
    n = int(labels.max()) + 1
    everyone = frozenset(range(n))

    def logit(removed: Coalition) -> float:
        return float(predict(model, mask(image, labels, removed, policy)).logits[class_k])

    if keep_only:
        empty_logit = logit(everyone)

        def value(s: Coalition) -> float:
            return logit(everyone - s) - empty_logit
    else:
        full_logit = float(predict(model, image).logits[class_k])

        def value(s: Coalition) -> float:
            return full_logit - logit(s)

    return Game(n, value, name=name)


def additive_contributions(
    model: ModelSpec,
    image: np.ndarray,
    labels: np.ndarray,
    class_k: int,
    policy: MaskingPolicy,
) -> np.ndarray:
    """Closed-form per-segment value of a linear_color removal game."""
    if model.kind != ModelKind.LINEAR_COLOR:
        raise CapabilityError(f"{model.kind.value} games are not additive")
    fill = policy.resolve(image).fill().astype(float)
    per_pixel = (image.astype(float) - fill) @ model.params["w"][class_k] / 255.0
    n = int(labels.max()) + 1
    return np.bincount(labels.ravel(), weights=per_pixel.ravel(), minlength=n)
