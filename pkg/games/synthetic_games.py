"""
Synthetic coalition games for oracle checks.

Game definition files are JSON:
    {"n": 4, "kind": "additive", "weights": [0.3, -0.2, 0.5, 0.0]}
    {"n": 4, "kind": "edges", "edges": [[0, 1], [1, 2]], "weights": [1.0, 2.0]}
    {"n": 2, "kind": "table", "table": {"": 0, "0": 1, "1": 0, "0,1": 2}}

An optional "graph": [[i, j], ...] entry gives the neighbor graph used by the
oracle harness. Table games default missing coalitions to 0.0.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import FormatError
from games.coalition_game import Coalition, Game
from games.neighbor_graph import EdgeKind, NeighborGraph

logger = logging.getLogger(__name__)

GAME_KINDS = ("additive", "edges", "table")


# ============= Generators =============

def additive_game(weights: Sequence[float]) -> Game:
    """v(S) = sum of member weights."""
    w = [float(x) for x in weights]
    return Game(len(w), lambda s: sum(w[i] for i in sorted(s)), name="additive")


def power_game(n: int, power: float = 2.0) -> Game:
    """v(S) = |S|^power."""
    return Game(n, lambda s: float(len(s)) ** power, name=f"power{power:g}")


def edge_game(
    n: int,
    edges: Sequence[Tuple[int, int]],
    weights: Optional[Sequence[float]] = None,
    name: str = "edges",
) -> Game:
    """v(S) = total weight of edges with both endpoints inside S."""
    pairs = [(int(a), int(b)) for a, b in edges]
    w = [1.0] * len(pairs) if weights is None else [float(x) for x in weights]
    if len(w) != len(pairs):
        raise FormatError(f"{len(pairs)} edges but {len(w)} edge weights")

    def value(s: Coalition) -> float:
        return sum(wt for (a, b), wt in zip(pairs, w) if a in s and b in s)

    return Game(n, value, name=name)


def ring_edge_game(n: int) -> Tuple[Game, NeighborGraph]:
    """Edge-counting game on a ring together with its ring graph."""
    graph = NeighborGraph.ring(n)
    edges = [(a, b) for a, b, _ in graph.edges()]
    return edge_game(n, edges, name=f"ring{n}"), graph


def grid_edge_game(rows: int, cols: int) -> Tuple[Game, NeighborGraph]:
    """Edge-counting game on a rows x cols grid together with its grid graph."""
    graph = NeighborGraph.grid(rows, cols)
    edges = [(a, b) for a, b, _ in graph.edges()]
    return edge_game(rows * cols, edges, name=f"grid{rows}x{cols}"), graph


def table_game(n: int, table: Dict[Coalition, float], name: str = "table") -> Game:
    frozen = {frozenset(k): float(v) for k, v in table.items()}
    return Game(n, lambda s: frozen.get(s, 0.0), name=name)


def random_table_game(n: int, rng: np.random.Generator, scale: float = 1.0) -> Game:
    """A game with an independent random value for every coalition (v(empty) included)."""
    values = rng.normal(0.0, scale, size=1 << n)

    def value(s: Coalition) -> float:
        mask = 0
        for m in s:
            mask |= 1 << m
        return float(values[mask])

    return Game(n, value, name=f"random{n}")


# ============= File format =============

def _parse_table_key(key: str, n: int) -> Coalition:
    key = key.strip()
    if not key:
        return frozenset()
    try:
        members = frozenset(int(part) for part in key.split(","))
    except ValueError as e:
        raise FormatError(f"bad table key {key!r}: {e}") from e
    if any(m < 0 or m >= n for m in members):
        raise FormatError(f"table key {key!r} names a player outside [0, {n})")
    return members


def game_from_dict(definition: dict) -> Tuple[Game, NeighborGraph]:
    """Build a game and its oracle neighbor graph from a definition dict."""
    try:
        n = int(definition["n"])
        kind = definition["kind"]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"game definition needs integer 'n' and 'kind': {e}") from e
    if kind not in GAME_KINDS:
        raise FormatError(f"unknown game kind {kind!r}; expected one of {GAME_KINDS}")

    edges: List[Tuple[int, int]] = [tuple(e) for e in definition.get("edges", [])]

    if kind == "additive":
        weights = definition.get("weights", [])
        if len(weights) != n:
            raise FormatError(f"additive game needs {n} weights, got {len(weights)}")
        game = additive_game(weights)
    elif kind == "edges":
        weights = definition.get("weights")
        game = edge_game(n, edges, weights if weights else None)
    else:
        table = {_parse_table_key(k, n): v for k, v in definition.get("table", {}).items()}
        game = table_game(n, table)

    if "graph" in definition:
        graph = NeighborGraph.from_edges(n, [tuple(e) for e in definition["graph"]], EdgeKind.PHYSICAL)
    elif kind == "edges":
        graph = NeighborGraph.from_edges(n, edges, EdgeKind.PHYSICAL)
    else:
        graph = NeighborGraph.ring(n)
    return game, graph


def load_game_file(path: Path) -> Tuple[Game, NeighborGraph]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Game file not found at {path}")
    try:
        with path.open("r") as f:
            definition = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    game, graph = game_from_dict(definition)
    game.name = path.stem
    logger.info("Loaded %s game %s with %s players", definition["kind"], path.name, game.player_count)
    return game, graph
