"""
Scorers built by construction for the colored-blob toy dataset.

Class colours sit on the +/- axes of RGB space around the gray background, so
the projection of one class colour onto another is never positive.

blob_detector_mlp: one hidden unit per (class, downsampled pixel). A unit
saturates to +1 when that pixel is (almost) pure class colour and to exactly -1
otherwise; logit_c counts the firing pixels of class c. With the blob removed
every unit is -1 and all logits tie at 0.

toy_linear_color: logit_c is the mean projection of the image onto the class
colour direction, i.e. roughly the blob's area fraction.
"""

from typing import Sequence, Tuple

import numpy as np

from models.scorers import ModelSpec, linear_color_model, tiny_mlp_model

BACKGROUND_GRAY = 128
COLOR_OFFSET = 102
CLASS_NAMES = ("red", "teal", "green", "purple", "blue")
CLASS_COLORS: Tuple[Tuple[int, int, int], ...] = (
    (230, 128, 128),
    (26, 128, 128),
    (128, 230, 128),
    (128, 26, 128),
    (128, 128, 230),
)

DETECTOR_INPUT_SIZE = 8
DETECTOR_GAIN = 120.0
DETECTOR_THRESHOLD = 0.7


def class_directions(colors: Sequence[Tuple[int, int, int]] = CLASS_COLORS) -> np.ndarray:
    """u_c = d_c / |d_c|^2 with d_c the class colour offset from gray, in [0, 1] units."""
    d = (np.asarray(colors, dtype=float) - BACKGROUND_GRAY) / 255.0
    return d / (d ** 2).sum(axis=1, keepdims=True)


def blob_detector_mlp(
    colors: Sequence[Tuple[int, int, int]] = CLASS_COLORS,
    input_size: int = DETECTOR_INPUT_SIZE,
    gain: float = DETECTOR_GAIN,
    threshold: float = DETECTOR_THRESHOLD,
) -> ModelSpec:
    u = class_directions(colors)
    classes = len(u)
    pixels = input_size * input_size
    gray = np.full(3, BACKGROUND_GRAY / 255.0)

    # hidden unit (c, p) reads only the three channels of pixel p
    w1 = np.zeros((classes * pixels, pixels * 3))
    b1 = np.zeros(classes * pixels)
    w2 = np.zeros((classes, classes * pixels))
    for c in range(classes):
        for p in range(pixels):
            unit = c * pixels + p
            w1[unit, 3 * p:3 * p + 3] = gain * u[c]
            b1[unit] = -gain * (u[c] @ gray + threshold)
        w2[c, c * pixels:(c + 1) * pixels] = 0.5
    b2 = np.full(classes, 0.5 * pixels)
    return tiny_mlp_model(w1, b1, w2, b2, input_size=input_size)


def toy_linear_color(
    colors: Sequence[Tuple[int, int, int]] = CLASS_COLORS,
    image_pixels: int = 40 * 40,
) -> ModelSpec:
    u = class_directions(colors)
    gray = np.full(3, BACKGROUND_GRAY / 255.0)
    return linear_color_model(u / image_pixels, -(u @ gray))
