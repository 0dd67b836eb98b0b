"""
Oracle comparison on synthetic games: every estimator next to exact Shapley,
with PASS/FAIL checks and a per-player evaluation budget measured on forked
games.
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np

from games.coalition_game import Game
from games.neighbor_graph import NeighborGraph
from games.shapley_engine import (
    MAX_EXACT_PLAYERS,
    RestrictionMode,
    SamplerConfig,
    cone_shap,
    cone_shap_all,
    exact_shapley,
    mc_shapley,
    neighbor_shapley_all,
    occlusion_all,
)

logger = logging.getLogger(__name__)

DEFAULT_PERMUTATIONS = 2000
AGREEMENT_TOLERANCE = 1e-9
METHODS = ("exact", "neighbor", "cone_shap", "mc", "occlusion")


def evaluation_budget(k: int, M: int) -> int:
    """Upper bound on distinct evaluations one cone_shap call may issue."""
    return M * 2 ** (k + 1)


def per_player_evaluations(
    game: Game, graph: NeighborGraph, cfg: SamplerConfig, mode: RestrictionMode = RestrictionMode.GLOBAL
) -> List[int]:
    counts = []
    for i in game.players:
        forked = game.fork(name=f"{game.name}/player{i}")
        cone_shap(forked, graph, i, cfg, mode)
        counts.append(forked.eval_counter)
    return counts


def _max_abs(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> Optional[float]:
    if a is None or b is None:
        return None
    return float(np.max(np.abs(a - b))) if len(a) else 0.0


def oracle_comparison(
    game: Game,
    graph: NeighborGraph,
    cfg: SamplerConfig,
    kind: Optional[str] = None,
    permutations: int = DEFAULT_PERMUTATIONS,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    jobs: int = 1,
) -> dict:
    n = game.player_count
    values: Dict[str, Optional[np.ndarray]] = {}
    values["exact"] = exact_shapley(game).values if n <= MAX_EXACT_PLAYERS else None
    values["neighbor"] = neighbor_shapley_all(game, graph, mode, jobs).values
    values["cone_shap"] = cone_shap_all(game, graph, cfg, mode, jobs=jobs).values
    values["mc"] = mc_shapley(game, permutations, cfg.seed).values
    values["occlusion"] = occlusion_all(game).values
    evals = per_player_evaluations(game, graph, cfg, mode)
    budget = evaluation_budget(cfg.k, cfg.M)

    errors = {f"{m}_max_abs_error": _max_abs(values[m], values["exact"]) for m in METHODS[1:]}

    checks: Dict[str, str] = {}

    def verdict(ok: bool) -> str:
        return "PASS" if ok else "FAIL"

    checks["evaluation_budget"] = verdict(max(evals, default=0) <= budget)
    if values["exact"] is not None:
        exact = values["exact"]
        total = game.evaluate(game.grand_coalition()) - game.evaluate(frozenset())
        checks["exact_efficiency"] = verdict(abs(math.fsum(exact) - total) <= AGREEMENT_TOLERANCE)
        if kind == "additive":
            agree = all(errors[f"{m}_max_abs_error"] <= AGREEMENT_TOLERANCE for m in METHODS[1:])
            checks["additive_agreement"] = verdict(agree)
        if kind == "edges":
            checks["locality_exactness"] = verdict(errors["neighbor_max_abs_error"] <= AGREEMENT_TOLERANCE)

    players = []
    for i in range(n):
        row = {"player": i, "neighbors": graph.degree(i), "evals": evals[i]}
        for m in METHODS:
            row[m] = float(values[m][i]) if values[m] is not None else None
        players.append(row)

    status = "PASS" if all(v == "PASS" for v in checks.values()) else "FAIL"
    logger.info("Oracle comparison on %s (%s players): %s", game.name, n, status)
    return {
        "game": game.name,
        "kind": kind,
        "player_count": n,
        "config": {"k": cfg.k, "M": cfg.M, "seed": cfg.seed, "permutations": permutations,
                   "mode": RestrictionMode(mode).value},
        "evaluation_budget_per_player": budget,
        "players": players,
        "max_abs_error": errors,
        "checks": checks,
        "status": status,
    }
