"""
Shapley value estimators.

- exact_shapley: full enumeration over 2^N coalitions (N <= 20).
- neighbor_shapley: exact Shapley of player i inside the lattice N(i) + {i}.
- cone_shap: the sampled neighbor estimator. Each of M draws samples k
  neighbors uniformly without replacement and computes the neighbor formula
  inside the sampled set; the draws are averaged.
- mc_shapley: permutation-sampling baseline.
- occlusion: leave-one-out at the grand coalition.

Random streams: every draw uses its own PCG64 generator seeded by
SeedSequence(seed, spawn_key=stream + (player, draw)), so results do not
depend on which worker handles which player.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import comb

from common.errors import CapacityError, DomainError, PreconditionError
from games.coalition_game import Game, PlayerId
from games.neighbor_graph import NeighborGraph

logger = logging.getLogger(__name__)

MAX_EXACT_PLAYERS = 20


class Method(str, Enum):
    EXACT = "exact"
    NEIGHBOR = "neighbor"
    CONE_SHAP = "cone_shap"
    MC = "mc"
    OCCLUSION = "occlusion"


class RestrictionMode(str, Enum):
    # players outside the lattice are absent from the coalition
    GLOBAL = "global"
    # players outside the lattice are held present (grand-coalition state)
    CONDITIONAL = "conditional"


@dataclass
class SamplerConfig:
    k: int = 5
    M: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.M < 1:
            raise PreconditionError(f"sampler needs k >= 1 and M >= 1, got k={self.k}, M={self.M}")


@dataclass
class AttributionVector:
    values: np.ndarray
    method: Method
    seed: Optional[int] = None
    evals_used: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"{self.method} attribution produced non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "method": Method(self.method).value,
            "seed": self.seed,
            "evals_used": self.evals_used,
            "values": [float(v) for v in self.values],
        }


def player_rng(seed: int, player: int, draw: int, stream: Tuple[int, ...] = ()) -> np.random.Generator:
    """Generator for one (player, draw) pair; independent of scheduling."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream) + (int(player), int(draw)))
    return np.random.Generator(np.random.PCG64(seq))


def _shapley_weights(n: int) -> List[float]:
    """w[t] = t!(n-t-1)!/n!, the weight of a coalition of t others of a lattice of n players."""
    return [1.0 / (n * comb(n - 1, t, exact=True)) for t in range(n)]


def restricted_shapley(
    game: Game,
    i: PlayerId,
    others: Sequence[int],
    mode: RestrictionMode = RestrictionMode.GLOBAL,
) -> float:
    """Exact Shapley value of player i in the lattice others + {i}."""
    others = sorted(int(o) for o in others if o != i)
    n = len(others) + 1
    weights = _shapley_weights(n)
    outside = frozenset()
    if RestrictionMode(mode) == RestrictionMode.CONDITIONAL:
        outside = game.grand_coalition() - set(others) - {i}

    total = 0.0
    for t in range(n):
        for subset in combinations(others, t):
            base = frozenset(subset) | outside
            total += weights[t] * (game.evaluate(base | {i}) - game.evaluate(base))
    return total


# ============= Exact oracle =============

def exact_shapley(game: Game) -> AttributionVector:
    """Enumerate all coalitions; every one of the 2^N values is evaluated once."""
    n = game.player_count
    if n > MAX_EXACT_PLAYERS:
        raise CapacityError(f"exact Shapley limited to {MAX_EXACT_PLAYERS} players, game has {n}")
    start = game.eval_counter
    if n == 0:
        return AttributionVector(np.zeros(0), Method.EXACT, evals_used=0)

    values = np.empty(1 << n)
    for mask in range(1 << n):
        values[mask] = game.evaluate(frozenset(p for p in range(n) if mask >> p & 1))

    weights = np.asarray(_shapley_weights(n))
    masks = np.arange(1 << n)
    sizes = np.zeros(1 << n, dtype=int)
    for p in range(n):
        sizes += (masks >> p) & 1
    phi = np.zeros(n)
    for p in range(n):
        bit = 1 << p
        without = masks[(masks & bit) == 0]
        phi[p] = np.dot(weights[sizes[without]], values[without | bit] - values[without])

    return AttributionVector(phi, Method.EXACT, evals_used=game.eval_counter - start)


# ============= Neighbor Shapley and CONE-SHAP =============

def neighbor_shapley(
    game: Game,
    graph: NeighborGraph,
    i: PlayerId,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
) -> float:
    neighbors = graph.neighbors(i)
    if len(neighbors) + 1 > MAX_EXACT_PLAYERS:
        raise CapacityError(
            f"player {i} has {len(neighbors)} neighbors; neighbor Shapley limited to "
            f"{MAX_EXACT_PLAYERS} lattice players"
        )
    return restricted_shapley(game, i, neighbors, mode)


def cone_shap_draws(
    game: Game,
    graph: NeighborGraph,
    i: PlayerId,
    cfg: SamplerConfig,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    stream: Tuple[int, ...] = (),
) -> np.ndarray:
    """The M per-draw estimates whose mean is the CONE-SHAP value of player i."""
    neighbors = graph.neighbors(i)
    if len(neighbors) <= cfg.k:
        # no subsampling: every draw is the full neighborhood
        value = restricted_shapley(game, i, neighbors, mode)
        return np.full(cfg.M, value)

    pool = np.asarray(neighbors)
    draws = np.empty(cfg.M)
    for t in range(cfg.M):
        rng = player_rng(cfg.seed, i, t, stream)
        sampled = rng.choice(pool, size=cfg.k, replace=False)
        draws[t] = restricted_shapley(game, i, sampled.tolist(), mode)
    return draws


def cone_shap(
    game: Game,
    graph: NeighborGraph,
    i: PlayerId,
    cfg: SamplerConfig,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    stream: Tuple[int, ...] = (),
) -> float:
    draws = cone_shap_draws(game, graph, i, cfg, mode, stream)
    if len(graph.neighbors(i)) <= cfg.k:
        return float(draws[0])
    return float(math.fsum(draws) / len(draws))


def expected_cone_shap(
    game: Game,
    graph: NeighborGraph,
    i: PlayerId,
    k: int,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
) -> float:
    """Mean of the neighbor formula over every k-subset of N(i): the large-M limit of cone_shap."""
    neighbors = graph.neighbors(i)
    if len(neighbors) <= k:
        return restricted_shapley(game, i, neighbors, mode)
    values = [restricted_shapley(game, i, list(s), mode) for s in combinations(neighbors, k)]
    return float(math.fsum(values) / len(values))


def _run_players(fn, players: Sequence[int], jobs: int) -> List[float]:
    if jobs <= 1 or len(players) <= 1:
        return [fn(p) for p in players]
    return Parallel(n_jobs=jobs, prefer="threads")(delayed(fn)(p) for p in players)


def neighbor_shapley_all(
    game: Game,
    graph: NeighborGraph,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    jobs: int = 1,
) -> AttributionVector:
    start = game.eval_counter
    values = _run_players(lambda p: neighbor_shapley(game, graph, p, mode), list(game.players), jobs)
    return AttributionVector(values, Method.NEIGHBOR, evals_used=game.eval_counter - start)


def cone_shap_all(
    game: Game,
    graph: NeighborGraph,
    cfg: SamplerConfig,
    mode: RestrictionMode = RestrictionMode.GLOBAL,
    stream: Tuple[int, ...] = (),
    jobs: int = 1,
) -> AttributionVector:
    start = game.eval_counter
    values = _run_players(
        lambda p: cone_shap(game, graph, p, cfg, mode, stream), list(game.players), jobs
    )
    logger.debug("cone_shap over %s players of %s: %s evaluations",
                 game.player_count, game.name, game.eval_counter - start)
    return AttributionVector(
        values,
        Method.CONE_SHAP,
        seed=cfg.seed,
        evals_used=game.eval_counter - start,
        extras={"k": cfg.k, "M": cfg.M, "mode": RestrictionMode(mode).value},
    )


# ============= Baselines =============

def mc_shapley(game: Game, permutations: int, seed: int) -> AttributionVector:
    """Average marginal contributions over uniformly random player orderings."""
    if permutations < 1:
        raise PreconditionError(f"permutations must be >= 1, got {permutations}")
    n = game.player_count
    start = game.eval_counter
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    totals = np.zeros(n)
    for _ in range(permutations):
        order = rng.permutation(n)
        prefix = frozenset()
        previous = game.evaluate(prefix)
        for p in order:
            prefix = prefix | {int(p)}
            current = game.evaluate(prefix)
            totals[p] += current - previous
            previous = current
    return AttributionVector(
        totals / permutations, Method.MC, seed=seed, evals_used=game.eval_counter - start,
        extras={"permutations": permutations},
    )


def occlusion(game: Game, i: PlayerId) -> float:
    """v(N) - v(N \\ {i})."""
    return game.marginal_contribution(i, game.grand_coalition())


def occlusion_all(game: Game) -> AttributionVector:
    start = game.eval_counter
    values = [occlusion(game, p) for p in game.players]
    return AttributionVector(values, Method.OCCLUSION, evals_used=game.eval_counter - start)
