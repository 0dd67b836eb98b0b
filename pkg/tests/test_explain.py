import numpy as np
import pandas as pd
import pytest
from scipy import stats

from common.errors import DomainError, FormatError
from concepts.concept_discovery import Embedding, SegmentRef, kmeans
from explain.attribution import SegmentScoreTable, attribute_instance, image_stream, level_graph
from explain.concept_scores import (
    ConceptScore,
    class_concept_scores,
    dense_ranks,
    instance_concept_importance,
    load_concept_scores,
    save_concept_scores,
    top_concepts,
    top_instance_concepts,
)
from explain.saliency import render_saliency, saliency, save_saliency_png
from games.neighbor_graph import EdgeKind, NeighborGraph
from games.shapley_engine import SamplerConfig, cone_shap_all, exact_shapley
from imaging.segmentation import LabelMap, ResolutionLevel, SegmentationSet, adjacency
from models.image_game import additive_contributions, build_game
from models.masking import MaskingPolicy
from models.scorers import tiny_mlp_model


def table_from(rows):
    return SegmentScoreTable(pd.DataFrame(rows, columns=["image_id", "level", "segment_id", "value"]))


def one_concept_per_segment(seg_set):
    """A concept model whose concepts group segment ids by parity at every level."""
    embeddings = []
    for level in seg_set.levels():
        for sid in range(seg_set.maps[level].segment_count):
            embeddings.append(Embedding(np.array([float(sid % 2) * 10.0]), SegmentRef(seg_set.image_id, level.value, sid)))
    return kmeans(embeddings, 2, seed=0)


# ============= Attribution =============

def test_linear_model_attribution_is_exact(linear_model, blob_image, small_seg_set):
    policy = MaskingPolicy.mean_color()
    table = attribute_instance(blob_image, small_seg_set, linear_model, 0, SamplerConfig(k=2, M=1), policy)
    assert len(table) == small_seg_set.segment_count()
    for level in small_seg_set.levels():
        labels = small_seg_set.maps[level].labels
        expected = additive_contributions(linear_model, blob_image, labels, 0, policy)
        got = table.level_values("red_000", level, len(expected))
        np.testing.assert_allclose(got, expected, atol=1e-9)


def test_attribution_independent_of_jobs(detector, blob_image, small_seg_set):
    cfg = SamplerConfig(k=2, M=2, seed=5)
    policy = MaskingPolicy.mean_color()
    serial = attribute_instance(blob_image, small_seg_set, detector, 0, cfg, policy, jobs=1)
    parallel = attribute_instance(blob_image, small_seg_set, detector, 0, cfg, policy, jobs=3)
    pd.testing.assert_frame_equal(serial.frame, parallel.frame)


def test_near_linear_mlp_ranks_like_exact_shapley(blob_image, small_seg_set):
    rng = np.random.default_rng(0)
    d = 4 * 4 * 3
    # tiny weights keep tanh in its linear range
    model = tiny_mlp_model(rng.normal(0, 1e-3, (6, d)), np.zeros(6), rng.normal(0, 1, (2, 6)), np.zeros(2), input_size=4)
    level = ResolutionLevel.MEDIUM
    labels = small_seg_set.maps[level].labels
    policy = MaskingPolicy.zero()

    table = attribute_instance(blob_image, small_seg_set, model, 0, SamplerConfig(k=3, M=3, seed=1), policy)
    cone = table.level_values("red_000", level, int(labels.max()) + 1)
    exact = exact_shapley(build_game(model, blob_image, labels, 0, policy)).values
    rho, _ = stats.spearmanr(cone, exact)
    assert rho > 0.9


def test_blob_detector_ranks_like_exact_shapley(detector, blob_image):
    # 3 x 4 grid whose row edges cut through the detector's 5-pixel input cells
    yy, xx = np.mgrid[0:blob_image.shape[0], 0:blob_image.shape[1]]
    labels = (yy * 3 // blob_image.shape[0]) * 4 + xx * 4 // blob_image.shape[1]
    game = build_game(detector, blob_image, labels, 0, MaskingPolicy.mean_color())
    assert game.player_count == 12

    graph = NeighborGraph.complete(game.player_count)
    cone = cone_shap_all(game, graph, SamplerConfig(k=5, M=1, seed=0)).values
    exact = exact_shapley(game).values
    rho, _ = stats.spearmanr(cone, exact)
    assert rho >= 0.8


def test_level_graph_ablations(small_seg_set):
    concepts = one_concept_per_segment(small_seg_set)
    level = ResolutionLevel.SMALL
    physical = adjacency(small_seg_set.maps[level])
    full = level_graph(small_seg_set, level, concepts)
    assert full.edge_count() >= physical.edge_count()

    no_semantic = level_graph(small_seg_set, level, concepts, "no-semantic")
    assert no_semantic.edges() == physical.edges()

    no_physical = level_graph(small_seg_set, level, concepts, "no-physical")
    assert all(kind == EdgeKind.SEMANTIC for _, _, kind in no_physical.edges())
    for a, b, _ in no_physical.edges():
        assert a % 2 == b % 2

    with pytest.raises(DomainError):
        level_graph(small_seg_set, level, concepts, "no-everything")


def test_image_stream_is_stable():
    assert image_stream("red_000", ResolutionLevel.MEDIUM) == image_stream("red_000", ResolutionLevel.MEDIUM)
    assert image_stream("red_000", ResolutionLevel.MEDIUM)[1] == 1
    assert image_stream("red_000", ResolutionLevel.LARGE) != image_stream("red_001", ResolutionLevel.LARGE)


# ============= Score tables =============

def test_score_table_csv(tmp_path):
    table = table_from([["b", "large", 1, 0.1 + 0.2], ["a", "large", 0, -1.5]])
    table.to_csv(tmp_path / "t.csv")
    loaded = SegmentScoreTable.from_csv(tmp_path / "t.csv")
    assert loaded.image_ids() == ["a", "b"]
    assert loaded.values_by_ref()[SegmentRef("b", "large", 1)] == 0.1 + 0.2


def test_score_table_validation():
    with pytest.raises(FormatError):
        SegmentScoreTable(pd.DataFrame({"image_id": ["a"], "value": [1.0]}))
    with pytest.raises(FormatError):
        table_from([["a", "large", 0, float("nan")]])
    with pytest.raises(DomainError):
        table_from([["a", "large", 0, 1.0]]).level_values("a", ResolutionLevel.LARGE, 2)
    assert len(SegmentScoreTable.concat([])) == 0


# ============= Saliency =============

def test_saliency_averages_scaled_levels():
    labels = np.array([[0, 0], [1, 1]])
    seg_set = SegmentationSet("img", {
        ResolutionLevel.LARGE: LabelMap(labels, ResolutionLevel.LARGE),
        ResolutionLevel.SMALL: LabelMap(np.array([[0, 1], [0, 1]]), ResolutionLevel.SMALL),
    })
    table = table_from([
        ["img", "large", 0, 2.0], ["img", "large", 1, -1.0],
        ["img", "small", 0, 0.5], ["img", "small", 1, 0.0],
    ])
    result = saliency(table, seg_set)
    expected = (np.array([[1.0, 1.0], [-0.5, -0.5]]) + np.array([[1.0, 0.0], [1.0, 0.0]])) / 2
    np.testing.assert_allclose(result.scores, expected)
    assert result.max_abs() == pytest.approx(1.0)


@pytest.mark.parametrize("factor", [1e-3, 7.0])
def test_positive_rescaling_keeps_saliency_and_ranks(detector, blob_image, small_seg_set, factor):
    table = attribute_instance(blob_image, small_seg_set, detector, 0, SamplerConfig(k=2, M=1), MaskingPolicy.mean_color())
    frame = table.frame.copy()
    frame["value"] = frame["value"] * factor
    scaled = SegmentScoreTable(frame)

    np.testing.assert_allclose(saliency(scaled, small_seg_set).scores, saliency(table, small_seg_set).scores, atol=1e-12)
    concepts = one_concept_per_segment(small_seg_set)
    ranks = [(s.concept_id, s.rank) for s in class_concept_scores(table, concepts)]
    assert [(s.concept_id, s.rank) for s in class_concept_scores(scaled, concepts)] == ranks


def test_saliency_png(tmp_path, linear_model, blob_image, small_seg_set):
    table = attribute_instance(blob_image, small_seg_set, linear_model, 0, SamplerConfig(k=2), MaskingPolicy.mean_color())
    result = saliency(table, small_seg_set)
    assert result.scores.shape == blob_image.shape[:2]
    rgb = render_saliency(result)
    assert rgb.shape == blob_image.shape
    save_saliency_png(tmp_path / "s.png", result)
    assert (tmp_path / "s.png").exists()


# ============= Concept scores =============

def test_class_concept_scores_average_members():
    refs = [SegmentRef("a", "large", i) for i in range(4)]
    concepts = kmeans([Embedding(np.array([v]), r) for v, r in zip([0.0, 0.1, 9.0, 9.1], refs)], 2, seed=0)
    table = table_from([["a", "large", i, v] for i, v in enumerate([1.0, 3.0, -2.0, 0.0])])
    scores = class_concept_scores(table, concepts)
    assert [s.score for s in scores] == [2.0, -1.0]
    assert [s.rank for s in scores] == [1, 2]
    assert all(s.member_count == 2 for s in scores)

    importance = instance_concept_importance(table, concepts, "a")
    assert sorted(importance.values()) == [-2.0, 4.0]
    top = top_instance_concepts(importance, top=1, normalize=True)
    assert top[0][1] == 1.0


def test_dense_ranks_share_ties():
    assert dense_ranks([3.0, 1.0, 3.0, 2.0]) == [1, 3, 1, 2]
    assert dense_ranks([]) == []


def test_top_concepts_most_and_least():
    scores = [ConceptScore(0, 5.0, 2, 1), ConceptScore(3, 1.0, 2, 3), ConceptScore(1, 2.0, 2, 2)]
    assert [s.concept_id for s in top_concepts(scores, 2)] == [0, 1]
    assert [s.concept_id for s in top_concepts(scores, 2, least=True)] == [3, 1]


def test_concept_scores_persist(tmp_path):
    scores = [ConceptScore(2, 0.5, 4, 1)]
    save_concept_scores(tmp_path / "class0_scores.json", 0, scores)
    assert load_concept_scores(tmp_path / "class0_scores.json") == scores
    with pytest.raises(FileNotFoundError, match="explain-class"):
        load_concept_scores(tmp_path / "missing.json")
