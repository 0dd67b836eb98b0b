import json

import numpy as np
import pytest

from agents.coordinator import ClassCoordinator
from cli.main import EXIT_INPUT_ERROR, EXIT_OK, EXIT_UNDEFINED_METRIC, run
from common.config import RunConfig
from concepts.concept_discovery import segment_pixel_mask
from evaluation.performance_comparison import SWEEP_COLUMNS, hyperparameter_sweep
from explain.attribution import SegmentScoreTable
from imaging.dataset import Dataset
from imaging.image_io import save_image
from imaging.segmentation import ResolutionLevel
from imaging.toy_data import generate_toy_dataset, write_toy_config
from models.image_game import additive_contributions
from models.masking import MaskingPolicy
from models.scorers import load_model, save_model
from models.toy_models import CLASS_COLORS, blob_detector_mlp

pytestmark = pytest.mark.slow


def config_file(tmp_path, **values):
    path = tmp_path / "run.json"
    payload = {"resolutions": [4, 6, 9], "clusters": 3, "top_k": 2}
    payload.update(values)
    path.write_text(json.dumps(payload))
    return path


# ============= Coordinator =============

def test_full_pipeline_writes_every_stage(small_config, toy_root):
    dataset = Dataset.load(toy_root)
    model = load_model(toy_root / "models" / "tiny_mlp.json")
    report = ClassCoordinator(small_config, dataset, model).run(evaluate=True)

    assert report["status"] in ("OK", "WARN")
    assert [c["class_id"] for c in report["classes"]] == [0, 1]
    root = small_config.root
    for class_id in (0, 1):
        assert (root / "embeddings" / f"class{class_id}.csv").exists()
        assert (root / "concepts" / f"class{class_id}.json").exists()
        assert (root / "attributions" / f"class{class_id}.csv").exists()
        assert (root / "reports" / f"class{class_id}_scores.json").exists()
        assert (root / "reports" / f"curves_class{class_id}.csv").exists()
    image_id = dataset.image_ids(0)[0]
    assert (root / "segments" / f"{image_id}_large.png").exists()
    assert (root / "reports" / f"{image_id}_saliency.png").exists()
    assert (root / "reports" / "class_report.json").exists()

    for entry in report["classes"]:
        assert entry["baseline_accuracy"] == 1.0
        assert entry["concepts"]
        most = {p["mode"]: p["accuracy"] for p in entry["curves"] if p["top_k"] == 1}
        assert most["SSC_add"] >= most["least_add"]
        assert most["SDC_remove"] <= most["least_remove"]


def test_results_do_not_depend_on_jobs(tmp_path, small_config, toy_root):
    dataset = Dataset.load(toy_root)
    model = load_model(toy_root / "models" / "tiny_mlp.json")
    outputs = []
    for jobs in (1, 3):
        config = small_config.with_overrides(jobs=jobs, workdir=str(tmp_path / f"jobs{jobs}"))
        coordinator = ClassCoordinator(config, dataset, model)
        coordinator.discover(0)
        coordinator.explain_class(0)
        outputs.append((config.root / "attributions" / "class0.csv").read_bytes())
        outputs.append((config.root / "reports" / "class0_scores.json").read_bytes())
    assert outputs[0] == outputs[2]
    assert outputs[1] == outputs[3]


def test_explain_class_requires_discovery(small_config, toy_root):
    coordinator = ClassCoordinator(small_config, Dataset.load(toy_root), load_model(toy_root / "models" / "tiny_mlp.json"))
    with pytest.raises(FileNotFoundError, match="discover"):
        coordinator.explain_class(0)


def test_sweep_grid(small_config, toy_root):
    config = small_config.with_overrides(class_id=1)
    table = hyperparameter_sweep(config, Dataset.load(toy_root), load_model(toy_root / "models" / "tiny_mlp.json"),
                                 ks=(1, 2), Ms=(1,), ablations=(None, "no-semantic"))
    assert len(table) == 4
    assert list(table["ablate"]) == ["none", "none", "no-semantic", "no-semantic"]
    for column in SWEEP_COLUMNS.values():
        assert table[column].between(0.0, 1.0).all()


def test_ssc_most_does_not_fall_as_k_grows(small_config, toy_root):
    table = hyperparameter_sweep(small_config, Dataset.load(toy_root),
                                 load_model(toy_root / "models" / "tiny_mlp.json"), ks=(1, 2, 3), Ms=(1,))
    ssc = table["SSC_most"].to_numpy()
    assert np.all(np.diff(ssc) >= -0.05)


def test_cached_segmentation_follows_the_settings(small_config, toy_root):
    dataset = Dataset.load(toy_root)
    model = load_model(toy_root / "models" / "tiny_mlp.json")
    image_id = dataset.image_ids(0)[0]
    first = ClassCoordinator(small_config, dataset, model).segmentation(image_id)
    assert first.maps[ResolutionLevel.SMALL].target == 9

    changed = small_config.with_overrides(resolutions=[4, 6, 12])
    second = ClassCoordinator(changed, dataset, model).segmentation(image_id)
    assert second.maps[ResolutionLevel.SMALL].target == 12
    sidecar = json.loads((changed.path("segments") / f"{image_id}_small.json").read_text())
    assert sidecar["target"] == 12


# ============= Additive model end to end =============

def test_linear_model_attributions_match_closed_form_for_every_seed(small_config, toy_root):
    dataset = Dataset.load(toy_root)
    linear = load_model(toy_root / "models" / "linear_color.json")
    embedder = load_model(toy_root / "models" / "tiny_mlp.json")
    policy = MaskingPolicy.mean_color()
    ClassCoordinator(small_config, dataset, linear, embedder).discover(0)
    rankings = []
    for seed in (0, 7, 123):
        config = small_config.with_overrides(seed=seed)
        coordinator = ClassCoordinator(config, dataset, linear, embedder)
        scores = coordinator.explain_class(0)
        table = SegmentScoreTable.from_csv(config.path("attributions") / "class0.csv")
        for image_id in dataset.image_ids(0):
            image, seg_set = dataset.image(image_id), coordinator.segmentation(image_id)
            for level in seg_set.levels():
                label_map = seg_set.maps[level]
                expected = additive_contributions(linear, image, label_map.labels, 0, policy)
                values = table.level_values(image_id, level, label_map.segment_count)
                np.testing.assert_allclose(values, expected, rtol=0, atol=1e-9)
        rankings.append([(s.concept_id, s.rank) for s in scores])
    assert rankings[0] == rankings[1] == rankings[2]


def test_faithfulness_is_one_on_the_linear_model(small_config, toy_root):
    dataset = Dataset.load(toy_root)
    linear = load_model(toy_root / "models" / "linear_color.json")
    coordinator = ClassCoordinator(small_config, dataset, linear, load_model(toy_root / "models" / "tiny_mlp.json"))
    coordinator.discover(0)
    coordinator.explain_class(0)
    report = coordinator.evaluate_class(0)["criteria"]
    assert report is not None
    assert report.faithfulness == pytest.approx(1.0, abs=1e-6)


# ============= Command line =============

def test_cli_end_to_end_is_deterministic(tmp_path, toy_root):
    model = str(toy_root / "models" / "tiny_mlp.json")
    cfg = str(config_file(tmp_path))
    reports = []
    for jobs in (1, 2):
        workdir = str(tmp_path / f"cli{jobs}")
        flags = ["--config", cfg, "--data", str(toy_root), "--model", model, "--workdir", workdir,
                 "--jobs", str(jobs), "--class", "0"]
        assert run(["discover", *flags]) == EXIT_OK
        assert run(["explain-class", *flags]) == EXIT_OK
        assert run(["evaluate", *flags, "--gnuplot"]) in (EXIT_OK, EXIT_UNDEFINED_METRIC)
        reports.append((tmp_path / f"cli{jobs}" / "reports" / "class_report.json").read_bytes())
        assert (tmp_path / f"cli{jobs}" / "reports" / "curves.dat").exists()
    assert reports[0] == reports[1]


def test_cli_explain_instance(tmp_path, toy_root, capsys):
    model = str(toy_root / "models" / "linear_color.json")
    workdir = str(tmp_path / "work")
    image = toy_root / "images" / "red_000.png"
    code = run(["explain-instance", "--config", str(config_file(tmp_path)), "--model", model,
                "--workdir", workdir, "--image", str(image), "--class", "0"])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["image_id"] == "red_000"
    assert printed["top_concepts"] == []
    assert (tmp_path / "work" / "reports" / "red_000_saliency.png").exists()


def test_cli_explain_class_without_concepts_fails(tmp_path, toy_root):
    code = run(["explain-class", "--data", str(toy_root), "--model", str(toy_root / "models" / "tiny_mlp.json"),
                "--workdir", str(tmp_path / "w")])
    assert code == EXIT_INPUT_ERROR


def test_cli_discover_with_a_model_without_representation(tmp_path, toy_root):
    linear = str(toy_root / "models" / "linear_color.json")
    flags = ["--config", str(config_file(tmp_path)), "--data", str(toy_root), "--class", "1"]
    # the tiny_mlp beside the linear model embeds the segments
    assert run(["discover", *flags, "--model", linear, "--workdir", str(tmp_path / "a")]) == EXIT_OK
    assert (tmp_path / "a" / "concepts" / "class1.json").exists()

    embedder = str(toy_root / "models" / "tiny_mlp.json")
    assert run(["discover", *flags, "--model", linear, "--embedding-model", embedder,
                "--workdir", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "concepts" / "class1.json").read_bytes() == \
        (tmp_path / "b" / "concepts" / "class1.json").read_bytes()

    lonely = tmp_path / "lonely" / "linear_color.json"
    lonely.parent.mkdir()
    lonely.write_bytes((toy_root / "models" / "linear_color.json").read_bytes())
    assert run(["discover", *flags, "--model", str(lonely), "--workdir", str(tmp_path / "c")]) == EXIT_INPUT_ERROR


def test_cli_segment(tmp_path, toy_root):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["segment", "--data", str(empty), "--workdir", str(tmp_path / "w0")]) == EXIT_OK

    folder = tmp_path / "imgs"
    save_image(folder / "ok.png", np.full((16, 16, 3), 120, dtype=np.uint8))
    (folder / "broken.png").write_bytes(b"\x89PNG garbage")
    assert run(["segment", "--data", str(folder), "--workdir", str(tmp_path / "w1")]) == EXIT_INPUT_ERROR
    assert (tmp_path / "w1" / "segments" / "ok_large.png").exists()

    assert run(["segment", "--data", str(tmp_path / "nowhere"), "--workdir", str(tmp_path / "w2")]) == EXIT_INPUT_ERROR


def test_cli_oracle(tmp_path, capsys):
    assert run(["oracle", "--ring", "6", "--k", "2", "--workdir", str(tmp_path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["status"] == "PASS"
    assert (tmp_path / "reports" / "oracle.json").exists()

    game = tmp_path / "game.json"
    game.write_text(json.dumps({"n": 3, "kind": "additive", "weights": [1.0, -2.0, 0.5]}))
    assert run(["oracle", "--game", str(game), "--workdir", str(tmp_path)]) == EXIT_OK
    assert run(["oracle", "--additive", "1,2,3", "--workdir", str(tmp_path)]) == EXIT_OK
    assert run(["oracle", "--game", str(tmp_path / "none.json"), "--workdir", str(tmp_path)]) == EXIT_INPUT_ERROR


def test_cli_toy_data(tmp_path):
    out = tmp_path / "toy"
    assert run(["toy-data", "--out", str(out), "--per-class", "2", "--classes", "3", "--workdir", str(tmp_path)]) == EXIT_OK
    dataset = Dataset.load(out)
    assert len(dataset) == 6
    assert dataset.class_ids() == [0, 1, 2]
    assert load_model(out / "models" / "tiny_mlp.json").class_count == 3


def test_cli_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"k": -1}))
    assert run(["oracle", "--ring", "4", "--config", str(bad), "--workdir", str(tmp_path)]) == EXIT_INPUT_ERROR


# ============= Toy protocol: five classes x forty images =============

@pytest.fixture(scope="module")
def toy_protocol(tmp_path_factory):
    """The full toy dataset run once with its own run.json."""
    root = tmp_path_factory.mktemp("toy_full")
    dataset = generate_toy_dataset(root, seed=0)
    save_model(root / "models" / "tiny_mlp.json", blob_detector_mlp(CLASS_COLORS))
    config = RunConfig.load(write_toy_config(root)).with_overrides(
        workdir=str(root / "work"), data=str(root), jobs=4
    )
    coordinator = ClassCoordinator(config, dataset, load_model(root / "models" / "tiny_mlp.json"))
    return dataset, coordinator, coordinator.run(evaluate=True)


def curve(entry, mode):
    return [p["accuracy"] for p in sorted(entry["curves"], key=lambda p: p["top_k"]) if p["mode"] == mode]


def test_removing_the_blob_concept_destroys_the_prediction(toy_protocol):
    _, _, report = toy_protocol
    chance = 1.0 / len(report["classes"])
    sdc_top1 = []
    for entry in report["classes"]:
        assert entry["baseline_accuracy"] == 1.0
        sdc, ssc = curve(entry, "SDC_remove"), curve(entry, "SSC_add")
        assert entry["baseline_accuracy"] - sdc[0] >= 0.5
        assert ssc[0] >= 0.9
        assert entry["baseline_accuracy"] - curve(entry, "least_remove")[0] <= 0.05
        assert np.all(np.diff(sdc) <= 0.02)
        assert np.all(np.diff(ssc) >= -0.02)
        sdc_top1.append(sdc[0])
    assert np.mean(sdc_top1) <= chance + 0.1


def test_top_concept_is_the_blob(toy_protocol):
    dataset, coordinator, report = toy_protocol
    for entry in report["classes"]:
        class_id = entry["class_id"]
        top = entry["concepts"][0]["concept_id"]
        concept_model = coordinator.concept_model(class_id)
        inside = total = 0
        for ref in concept_model.members(top):
            seg_set = coordinator.segmentation(ref.image_id)
            pixels = segment_pixel_mask(seg_set, [ref])
            inside += int((pixels & dataset.blob_mask(ref.image_id)).sum())
            total += int(pixels.sum())
        assert inside / total > 0.7
