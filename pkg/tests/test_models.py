import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from common.errors import CapabilityError, DomainError, FormatError, PreconditionError
from imaging.toy_data import draw_blob_image, image_rng
from models.image_game import additive_contributions, build_game
from models.masking import MaskingPolicy, MaskMode, mask, mask_pixels
from models.scorers import ModelKind, ModelSpec, image_embedding, load_model, predict, represent, save_model
from models.toy_models import CLASS_COLORS, DETECTOR_INPUT_SIZE


# ============= Masking =============

def test_mean_color_policy_resolves_to_rounded_mean():
    image = np.zeros((8, 8, 3), dtype=np.uint8)
    image[:4] = (10, 20, 31)
    policy = MaskingPolicy.mean_color().resolve(image)
    assert policy.mode == MaskMode.MEAN_COLOR
    assert policy.rgb == (5, 10, 16)
    assert policy.resolve(np.zeros_like(image)) is policy


def test_mask_only_touches_removed_segments(blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    out = mask(blob_image, labels, [0], MaskingPolicy.zero())
    assert np.all(out[labels == 0] == 0)
    assert np.array_equal(out[labels != 0], blob_image[labels != 0])
    assert np.array_equal(mask(blob_image, labels, [], MaskingPolicy.zero()), blob_image)


def test_mask_rejects_unknown_segments(blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    with pytest.raises(DomainError):
        mask(blob_image, labels, [int(labels.max()) + 1], MaskingPolicy.zero())


@given(remove=st.sets(st.integers(min_value=0, max_value=3), max_size=4))
@settings(max_examples=30, deadline=None)
def test_masking_twice_equals_masking_once(remove):
    image, _ = draw_blob_image(image_rng(0, 0, 0), CLASS_COLORS[0])
    labels = np.repeat(np.arange(4), image.shape[0] * image.shape[1] // 4).reshape(image.shape[:2])
    policy = MaskingPolicy.mean_color().resolve(image)
    once = mask(image, labels, remove, policy)
    np.testing.assert_array_equal(mask(once, labels, remove, policy), once)


def test_mask_needs_a_resolved_policy(blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    with pytest.raises(PreconditionError):
        mask(blob_image, labels, [0], MaskingPolicy.mean_color())
    with pytest.raises(PreconditionError):
        mask_pixels(blob_image, labels == 0, MaskingPolicy.mean_color())


def test_policy_validation():
    with pytest.raises(DomainError):
        MaskingPolicy(MaskMode.CONSTANT)
    with pytest.raises(DomainError):
        MaskingPolicy.constant((0, 0, 300))
    with pytest.raises(DomainError):
        MaskingPolicy.from_name("blur")
    assert MaskingPolicy.from_name("mean") == MaskingPolicy.mean_color()
    assert MaskingPolicy.constant((1, 2, 3)).describe() == "constant[1, 2, 3]"


# ============= Toy models =============

@pytest.mark.parametrize("class_id", range(len(CLASS_COLORS)))
def test_detector_finds_the_blob_class(detector, class_id):
    image, _ = draw_blob_image(image_rng(7, class_id, 0), CLASS_COLORS[class_id])
    logits = predict(detector, image).logits
    assert predict(detector, image).argmax() == class_id
    assert logits[class_id] > 0.5
    others = np.delete(logits, class_id)
    np.testing.assert_allclose(others, 0.0, atol=1e-9)


def test_detector_is_silent_once_the_blob_is_masked(detector):
    image, blob = draw_blob_image(image_rng(3, 1, 2), CLASS_COLORS[1])
    masked = mask_pixels(image, blob, MaskingPolicy.mean_color().resolve(image))
    np.testing.assert_allclose(predict(detector, masked).logits, 0.0, atol=1e-9)
    everything = mask_pixels(image, np.ones(blob.shape, dtype=bool), MaskingPolicy.mean_color().resolve(image))
    np.testing.assert_allclose(predict(detector, everything).logits, 0.0, atol=1e-9)
    # a tied top logit is no prediction at all
    assert predict(detector, everything).predicted_class() is None
    assert predict(detector, image).predicted_class() == 1


@pytest.mark.parametrize("class_id", range(len(CLASS_COLORS)))
def test_linear_color_prefers_the_blob_class(linear_model, class_id):
    image, _ = draw_blob_image(image_rng(0, class_id, 5), CLASS_COLORS[class_id])
    assert predict(linear_model, image).argmax() == class_id


def test_representation_layer(detector, linear_model, blob_image):
    vector = image_embedding(detector, blob_image)
    assert vector.shape == (len(CLASS_COLORS) * DETECTOR_INPUT_SIZE ** 2,)
    with pytest.raises(CapabilityError):
        represent(linear_model, blob_image)


# ============= Weight files =============

def test_model_file_persists(tmp_path, detector, blob_image):
    save_model(tmp_path / "mlp.json", detector)
    loaded = load_model(tmp_path / "mlp.json")
    assert loaded.kind == ModelKind.TINY_MLP
    assert loaded.input_size == DETECTOR_INPUT_SIZE
    np.testing.assert_array_equal(predict(loaded, blob_image).logits, predict(detector, blob_image).logits)


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


def test_model_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "none.json")
    with pytest.raises(FormatError):
        load_model(write_json(tmp_path / "kind.json", {"class_count": 2}))
    with pytest.raises(FormatError):
        load_model(write_json(tmp_path / "shape.json", {
            "kind": "linear_color", "class_count": 2,
            "shapes": {"w": [2, 3], "b": [3]},
            "data": {"w": [0.0] * 6, "b": [0.0] * 3},
        }))
    with pytest.raises(FormatError):
        load_model(write_json(tmp_path / "one.json", {
            "kind": "linear_color", "class_count": 1,
            "shapes": {"w": [1, 3], "b": [1]},
            "data": {"w": [0.0] * 3, "b": [0.0]},
        }))
    with pytest.raises(FormatError):
        load_model(write_json(tmp_path / "adapter.json", {"kind": "adapter", "class_count": 2}))
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(FormatError):
        load_model(tmp_path / "broken.json")


def test_adapter_model_needs_a_running_adapter(blob_image):
    model = ModelSpec(ModelKind.ADAPTER, class_count=2, command=["true"])
    with pytest.raises(CapabilityError):
        predict(model, blob_image)


# ============= Image games =============

def test_image_game_removal_semantics(detector, blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    game = build_game(detector, blob_image, labels, 0, MaskingPolicy.mean_color())
    assert game.player_count == int(labels.max()) + 1
    assert game.evaluate(frozenset()) == 0.0
    full = predict(detector, blob_image).logits[0]
    assert game.evaluate(game.grand_coalition()) == pytest.approx(full)


def test_keep_only_game_starts_from_empty(detector, blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    game = build_game(detector, blob_image, labels, 0, MaskingPolicy.mean_color(), keep_only=True)
    assert game.evaluate(frozenset()) == 0.0
    assert game.evaluate(game.grand_coalition()) == pytest.approx(predict(detector, blob_image).logits[0])


def test_image_game_class_range(detector, blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    with pytest.raises(DomainError):
        build_game(detector, blob_image, labels, len(CLASS_COLORS), MaskingPolicy.zero())


def test_additive_contributions_sum_to_grand_value(linear_model, blob_image, small_seg_set):
    policy = MaskingPolicy.mean_color()
    for label_map in small_seg_set.maps.values():
        game = build_game(linear_model, blob_image, label_map.labels, 0, policy)
        contributions = additive_contributions(linear_model, blob_image, label_map.labels, 0, policy)
        assert contributions.sum() == pytest.approx(game.evaluate(game.grand_coalition()), abs=1e-9)
        for sid in range(game.player_count):
            assert game.evaluate([sid]) == pytest.approx(contributions[sid], abs=1e-9)


def test_additive_contributions_need_a_linear_model(detector, blob_image, small_seg_set):
    labels = next(iter(small_seg_set.maps.values())).labels
    with pytest.raises(CapabilityError):
        additive_contributions(detector, blob_image, labels, 0, MaskingPolicy.zero())
