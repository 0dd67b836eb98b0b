"""
Command-line front end.

    python -m cli.main toy-data --out mock_db/toy_blobs
    python -m cli.main segment --data mock_db/toy_blobs
    python -m cli.main discover --data mock_db/toy_blobs --model mock_db/toy_blobs/models/tiny_mlp.json
    python -m cli.main discover --data ... --model linear_color.json --embedding-model tiny_mlp.json
    python -m cli.main explain-class --data ... --model ... --class 0
    python -m cli.main explain-instance --data ... --model ... --image red_000 --class 0
    python -m cli.main evaluate --data ... --model ... --gnuplot
    python -m cli.main oracle --game game.json
    python -m cli.main sweep --data ... --model ...

Without --config, a run.json in the data folder supplies the run settings.

Exit codes: 0 success, 1 undefined-metric warnings present, 2 input/config error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from agents.coordinator import ClassCoordinator, dump_json
from common.config import ABLATION_CHOICES, MASKING_CHOICES, RESTRICTION_CHOICES, RunConfig
from common.errors import ConeShapError
from common.settings import configure_logging
from evaluation.curves import merge_curves, save_curves_csv, save_gnuplot
from evaluation.oracle import oracle_comparison
from evaluation.performance_comparison import evaluation_budget_table, hyperparameter_sweep
from games.neighbor_graph import NeighborGraph
from games.shapley_engine import RestrictionMode, SamplerConfig
from games.synthetic_games import additive_game, grid_edge_game, load_game_file, ring_edge_game
from imaging.dataset import Dataset, ImageRecord
from imaging.image_io import image_id_for, list_images, load_image
from imaging.segmentation import ResolutionLevel, multi_resolution_segment, save_segmentation
from imaging.toy_data import TOY_IMAGES_PER_CLASS, generate_toy_dataset, write_toy_config
from models.adapter import attach_adapter
from models.scorers import ModelSpec, load_model, save_model
from models.toy_models import CLASS_COLORS, blob_detector_mlp, toy_linear_color

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNDEFINED_METRIC = 1
EXIT_INPUT_ERROR = 2

DEFAULT_TOY_DATA = Path("mock_db") / "toy_blobs"
TOY_EMBEDDING_MODEL = "tiny_mlp.json"
DATASET_CONFIG = "run.json"


# ============= Argument parsing =============

def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k", type=int, help="neighbors sampled per draw")
    parser.add_argument("--M", type=int, help="number of draws")
    parser.add_argument("--jobs", type=int, help="parallel workers (results do not depend on it)")
    parser.add_argument("--ablate", choices=ABLATION_CHOICES)
    parser.add_argument("--masking", choices=MASKING_CHOICES)
    parser.add_argument("--restriction", choices=RESTRICTION_CHOICES)
    parser.add_argument("--class", dest="class_id", type=int)
    parser.add_argument("--workdir", type=str)
    parser.add_argument("--data", type=str, help="image folder or labelled dataset")
    parser.add_argument("--model", type=str, help="model weight / adapter definition JSON")
    parser.add_argument("--embedding-model", type=str,
                        help="model whose representation layer embeds segments (default: --model, or the "
                             "tiny_mlp.json beside it when --model has no representation layer)")
    parser.add_argument("--normalize", action="store_true", default=None,
                        help="normalize per-instance concept importances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cone-shap", description="Concept-based neighbor Shapley attribution")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("segment", "multi-resolution SLIC segmentation of every image"),
        ("discover", "concept discovery per class"),
        ("explain-instance", "saliency map and concept importances of one image"),
        ("explain-class", "class-wise concept scores"),
        ("evaluate", "criteria and SSC/SDC curves"),
        ("sweep", "k x M hyperparameter grid and evaluation budget"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        if name == "explain-instance":
            p.add_argument("--image", required=True, help="image id in --data, or a PNG/PPM path")
        if name == "evaluate":
            p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot-ready curve table")
        if name == "sweep":
            p.add_argument("--ablations", action="store_true", help="repeat the grid without physical / semantic edges")

    oracle = sub.add_parser("oracle", help="compare estimators against exact Shapley on a synthetic game")
    _add_common_flags(oracle)
    source = oracle.add_mutually_exclusive_group(required=True)
    source.add_argument("--game", type=Path, help="synthetic game JSON file")
    source.add_argument("--ring", type=int, metavar="N", help="ring edge-counting game")
    source.add_argument("--grid", type=str, metavar="RxC", help="grid edge-counting game")
    source.add_argument("--additive", type=str, metavar="W1,W2,...", help="additive game weights")
    oracle.add_argument("--permutations", type=int)

    toy = sub.add_parser("toy-data", help="write the colored-blob toy dataset and its models")
    _add_common_flags(toy)
    toy.add_argument("--out", type=Path, default=DEFAULT_TOY_DATA)
    toy.add_argument("--per-class", type=int, default=TOY_IMAGES_PER_CLASS)
    toy.add_argument("--classes", type=int, default=len(CLASS_COLORS))
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """--config, else the run.json shipped with --data, else defaults; flags override."""
    path = args.config
    if path is None and args.data and (Path(args.data) / DATASET_CONFIG).exists():
        path = Path(args.data) / DATASET_CONFIG
        logger.info("Using the dataset run configuration %s", path)
    config = RunConfig.load(path) if path else RunConfig()
    return config.with_overrides(
        seed=args.seed,
        k=args.k,
        M=args.M,
        jobs=args.jobs,
        ablate=args.ablate,
        masking=args.masking,
        restriction=args.restriction,
        class_id=args.class_id,
        workdir=args.workdir,
        data=args.data,
        model=args.model,
        embedding_model=args.embedding_model,
        normalize=args.normalize,
        permutations=getattr(args, "permutations", None),
    )


def _require(value, flag: str):
    if value is None:
        raise ConeShapError(f"{flag} is required for this command")
    return value


def _open_model(config: RunConfig) -> ModelSpec:
    return attach_adapter(load_model(Path(_require(config.model, "--model"))), pool_size=config.jobs)


def _open_embedding_model(config: RunConfig, model: ModelSpec) -> ModelSpec:
    if config.embedding_model:
        return attach_adapter(load_model(Path(config.embedding_model)), pool_size=config.jobs)
    if model.representation:
        return model
    sibling = Path(config.model).parent / TOY_EMBEDDING_MODEL
    if sibling.exists():
        logger.info("%s model has no representation layer; embedding segments with %s", model.kind.value, sibling)
        return load_model(sibling)
    return model


def _close_model(model: Optional[ModelSpec]) -> None:
    if model is not None and model.adapter is not None:
        model.adapter.close()


# ============= Commands =============

def cmd_segment(config: RunConfig) -> int:
    folder = Path(_require(config.data, "--data"))
    if not folder.exists():
        raise FileNotFoundError(f"Data folder not found at {folder}")
    image_folder = folder / "images" if (folder / "images").is_dir() else folder
    paths = list_images(image_folder)
    if not paths:
        logger.warning("No PNG/PPM images in %s; nothing to segment", image_folder)
        return EXIT_OK

    targets = dict(zip(ResolutionLevel, config.resolutions))
    failures = {}
    written = 0
    for path in paths:
        try:
            image = load_image(path)
            seg_set = multi_resolution_segment(image, image_id_for(path), targets,
                                               config.compactness, config.iterations)
            written += len(save_segmentation(config.path("segments"), seg_set))
        except (ConeShapError, OSError) as e:
            logger.error("Segmentation failed for %s: %s", path, e)
            failures[str(path)] = str(e)
    logger.info("Wrote %s label maps for %s images to %s",
                written, len(paths) - len(failures), config.path("segments"))
    if failures:
        for path, error in sorted(failures.items()):
            print(f"FAILED {path}: {error}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_OK


def _coordinator(config: RunConfig, model: ModelSpec, embedder: ModelSpec) -> ClassCoordinator:
    dataset = Dataset.load(Path(_require(config.data, "--data")))
    return ClassCoordinator(config, dataset, model, embedder)


def cmd_discover(config: RunConfig, model: ModelSpec, embedder: ModelSpec) -> int:
    coordinator = _coordinator(config, model, embedder)
    for class_id in coordinator.class_ids():
        coordinator.discover(class_id)
    return EXIT_OK


def cmd_explain_instance(config: RunConfig, model: ModelSpec, embedder: ModelSpec, image_arg: str) -> int:
    path = Path(image_arg)
    if path.suffix.lower() in (".png", ".ppm") and path.exists():
        image_id = image_id_for(path)
        dataset = Dataset(path.parent, [ImageRecord(image_id, path, config.class_id)])
    else:
        dataset = Dataset.load(Path(_require(config.data, "--data")))
        image_id = image_arg
        if image_id not in dataset.records:
            raise FileNotFoundError(f"Image {image_id!r} is neither a file nor an image id in {dataset.root}")
    class_id = config.class_id if config.class_id is not None else dataset.label(image_id)
    class_id = _require(class_id, "--class")

    coordinator = ClassCoordinator(config, dataset, model, embedder)
    state = coordinator.explain_instance(image_id, class_id)
    print(json.dumps({
        "image_id": image_id,
        "class_id": class_id,
        "top_concepts": [{"concept_id": c, "score": v} for c, v in state["top_concepts"]],
    }, indent=2))
    return EXIT_OK


def cmd_explain_class(config: RunConfig, model: ModelSpec, embedder: ModelSpec) -> int:
    coordinator = _coordinator(config, model, embedder)
    summary = {c: {"scores": coordinator.explain_class(c)} for c in coordinator.class_ids()}
    report = coordinator.generate_report(summary)
    return EXIT_INPUT_ERROR if report["instance_errors"] else EXIT_OK


def cmd_evaluate(config: RunConfig, model: ModelSpec, embedder: ModelSpec, gnuplot: bool) -> int:
    coordinator = _coordinator(config, model, embedder)
    summary = {}
    for class_id in coordinator.class_ids():
        entry = coordinator.evaluate_class(class_id)
        entry["scores"] = coordinator.class_scores(class_id)
        summary[class_id] = entry
    report = coordinator.generate_report(summary)

    merged = merge_curves([entry["curves"] for entry in summary.values()])
    save_curves_csv(config.path("reports") / "curves.csv", merged)
    if gnuplot:
        save_gnuplot(config.path("reports") / "curves.dat", merged)
    if report["warnings"]:
        logger.warning("%s undefined metrics; see %s", len(report["warnings"]),
                       config.path("reports") / "class_report.json")
        return EXIT_UNDEFINED_METRIC
    return EXIT_OK


def _oracle_game(args: argparse.Namespace):
    if args.game:
        game, graph = load_game_file(args.game)
        with Path(args.game).open("r", encoding="utf-8") as f:
            kind = json.load(f).get("kind")
        return game, graph, kind
    if args.ring is not None:
        game, graph = ring_edge_game(args.ring)
        return game, graph, "edges"
    if args.grid:
        try:
            rows, cols = (int(x) for x in args.grid.lower().split("x"))
        except ValueError as e:
            raise ConeShapError(f"--grid expects RxC, got {args.grid!r}") from e
        game, graph = grid_edge_game(rows, cols)
        return game, graph, "edges"
    weights = [float(w) for w in args.additive.split(",")]
    return additive_game(weights), NeighborGraph.ring(len(weights)), "additive"


def cmd_oracle(config: RunConfig, args: argparse.Namespace) -> int:
    game, graph, kind = _oracle_game(args)
    cfg = SamplerConfig(k=config.k, M=config.M, seed=config.seed)
    report = oracle_comparison(game, graph, cfg, kind=kind, permutations=config.permutations,
                               mode=RestrictionMode(config.restriction), jobs=config.jobs)
    dump_json(config.path("reports") / "oracle.json", report)
    print(json.dumps({"status": report["status"], "checks": report["checks"],
                      "max_abs_error": report["max_abs_error"]}, indent=2))
    return EXIT_OK if report["status"] == "PASS" else EXIT_UNDEFINED_METRIC


def cmd_toy_data(config: RunConfig, args: argparse.Namespace) -> int:
    dataset = generate_toy_dataset(args.out, classes=args.classes, per_class=args.per_class, seed=config.seed)
    colors = CLASS_COLORS[:args.classes]
    save_model(dataset.root / "models" / "tiny_mlp.json", blob_detector_mlp(colors))
    save_model(dataset.root / "models" / "linear_color.json", toy_linear_color(colors))
    print(f"Toy dataset: {len(dataset)} images in {dataset.root}")
    print(f"Models: {dataset.root / 'models'}")
    print(f"Run config: {write_toy_config(dataset.root)}")
    return EXIT_OK


def cmd_sweep(config: RunConfig, model: ModelSpec, embedder: ModelSpec, ablations: bool) -> int:
    dataset = Dataset.load(Path(_require(config.data, "--data")))
    variants = (None, "no-physical", "no-semantic") if ablations else (None,)
    table = hyperparameter_sweep(config, dataset, model, ablations=variants, embedding_model=embedder)
    reports = config.path("reports")
    reports.mkdir(parents=True, exist_ok=True)
    table.to_csv(reports / "sweep.csv", index=False, float_format="%.6f")

    game, _ = grid_edge_game(3, 4)
    budget = evaluation_budget_table(game, NeighborGraph.complete(game.player_count), seed=config.seed)
    budget.drop(columns=["seconds"]).to_csv(reports / "budget.csv", index=False)
    print(table.to_string(index=False))
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    model: Optional[ModelSpec] = None
    embedder: Optional[ModelSpec] = None
    try:
        config = load_config(args)
        if args.command == "segment":
            return cmd_segment(config)
        if args.command == "oracle":
            return cmd_oracle(config, args)
        if args.command == "toy-data":
            return cmd_toy_data(config, args)

        model = _open_model(config)
        embedder = _open_embedding_model(config, model)
        if args.command == "discover":
            return cmd_discover(config, model, embedder)
        if args.command == "explain-instance":
            return cmd_explain_instance(config, model, embedder, args.image)
        if args.command == "explain-class":
            return cmd_explain_class(config, model, embedder)
        if args.command == "evaluate":
            return cmd_evaluate(config, model, embedder, args.gnuplot)
        return cmd_sweep(config, model, embedder, args.ablations)
    except (ConeShapError, OSError, ValueError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    finally:
        if embedder is not model:
            _close_model(embedder)
        _close_model(model)


def main() -> None:
    configure_logging()
    sys.exit(run())


if __name__ == "__main__":
    main()
