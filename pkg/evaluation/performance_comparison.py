"""
Performance comparison: hyperparameter sweep and evaluation budget.

- hyperparameter_sweep: k in 1..5 x M in 1..3 grid of SSC/SDC accuracies
  (most and least important concepts), optionally per neighbor ablation.
- evaluation_budget_table: distinct model evaluations and wall time of
  CONE-SHAP per (k, M) on a fixed game, next to the M * 2^(k+1) bound.

Run directly for the budget table on a 3x4 grid edge-counting game:
    python -m evaluation.performance_comparison
"""

import logging
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from agents.coordinator import ClassCoordinator
from common.config import RunConfig
from common.settings import configure_logging
from evaluation.curves import CurveMode, CurvePoint, merge_curves
from evaluation.oracle import evaluation_budget, per_player_evaluations
from games.coalition_game import Game
from games.neighbor_graph import NeighborGraph
from games.shapley_engine import RestrictionMode, SamplerConfig, cone_shap_all
from games.synthetic_games import grid_edge_game
from imaging.dataset import Dataset
from models.scorers import ModelSpec

logger = logging.getLogger(__name__)

SWEEP_KS = (1, 2, 3, 4, 5)
SWEEP_MS = (1, 2, 3)

SWEEP_COLUMNS = {
    CurveMode.SSC_ADD: "SSC_most",
    CurveMode.SDC_REMOVE: "SDC_most",
    CurveMode.LEAST_ADD: "SSC_least",
    CurveMode.LEAST_REMOVE: "SDC_least",
}


def curve_summary(points: Sequence[CurvePoint]) -> Dict[str, float]:
    """Mean accuracy over top-1..top-k for each curve mode."""
    summary = {}
    for mode, column in SWEEP_COLUMNS.items():
        accuracies = [p.accuracy for p in points if p.mode == mode]
        summary[column] = float(np.mean(accuracies)) if accuracies else float("nan")
    return summary


def hyperparameter_sweep(
    config: RunConfig,
    dataset: Dataset,
    model: ModelSpec,
    ks: Sequence[int] = SWEEP_KS,
    Ms: Sequence[int] = SWEEP_MS,
    ablations: Sequence[Optional[str]] = (None,),
    embedding_model: Optional[ModelSpec] = None,
) -> pd.DataFrame:
    """One row per (ablation, k, M). Concepts are discovered once and shared by every variant."""
    base = ClassCoordinator(config, dataset, model, embedding_model)
    class_ids = base.class_ids()
    for class_id in class_ids:
        base.discover(class_id)

    rows = []
    for ablate in ablations:
        for k in ks:
            for M in Ms:
                tag = f"{ablate or 'full'}_k{k}_M{M}"
                variant_config = config.with_overrides(
                    k=k, M=M, ablate=ablate, workdir=str(config.root / "sweep" / tag)
                )
                variant = ClassCoordinator(variant_config, dataset, model, embedding_model)
                variant.seg_sets = base.seg_sets
                variant.concept_models = base.concept_models
                curves = []
                for class_id in class_ids:
                    scores = variant.explain_class(class_id)
                    curves.append(variant.class_curves(class_id, scores))
                row = {"ablate": ablate or "none", "k": k, "M": M}
                row.update(curve_summary(merge_curves(curves)))
                rows.append(row)
                logger.info("Sweep %s: %s", tag, {c: round(row[c], 4) for c in SWEEP_COLUMNS.values()})
    return pd.DataFrame(rows, columns=["ablate", "k", "M"] + list(SWEEP_COLUMNS.values()))


def evaluation_budget_table(
    game: Game,
    graph: NeighborGraph,
    ks: Sequence[int] = SWEEP_KS,
    Ms: Sequence[int] = SWEEP_MS,
    seed: int = 0,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
) -> pd.DataFrame:
    rows = []
    for k in ks:
        for M in Ms:
            cfg = SamplerConfig(k=k, M=M, seed=seed)
            evals = per_player_evaluations(game, graph, cfg, mode)
            fresh = game.fork()
            start = time.perf_counter()
            cone_shap_all(fresh, graph, cfg, mode)
            elapsed = time.perf_counter() - start
            bound = evaluation_budget(k, M)
            rows.append({
                "k": k,
                "M": M,
                "max_evals_per_player": max(evals),
                "mean_evals_per_player": float(np.mean(evals)),
                "bound": bound,
                "within_bound": max(evals) <= bound,
                "distinct_evals_all_players": fresh.eval_counter,
                "seconds": elapsed,
            })
    return pd.DataFrame(rows)


def main() -> List[dict]:
    configure_logging()
    game, graph = grid_edge_game(3, 4)
    # complete graph so larger k actually samples more neighbors
    graph = NeighborGraph.complete(game.player_count)

    print("=" * 80)
    print("CONE-SHAP PERFORMANCE ANALYSIS")
    print("Evaluation budget per (k, M) on a 3x4 grid edge-counting game")
    print("=" * 80)
    table = evaluation_budget_table(game, graph)
    print(table.to_string(index=False))
    print("\n" + "=" * 80)
    ok = bool(table["within_bound"].all())
    print(f"All players within M*2^(k+1): {'YES' if ok else 'NO'}")
    print("=" * 80)
    return table.to_dict(orient="records")


if __name__ == "__main__":
    main()
