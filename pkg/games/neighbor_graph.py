"""
Neighbor graphs over players.

Edges are undirected and carry a kind: physical (spatially adjacent segments),
semantic (segments of the same concept) or both. Keeping the kind on each edge
lets the physical-only and semantic-only ablations be a filter over one graph.
"""

from enum import Enum
from typing import Dict, Iterable, List, Tuple

from common.errors import DomainError


class EdgeKind(str, Enum):
    PHYSICAL = "physical"
    SEMANTIC = "semantic"
    BOTH = "both"


def _merge_kinds(a: EdgeKind, b: EdgeKind) -> EdgeKind:
    return a if a == b else EdgeKind.BOTH


class NeighborGraph:
    """Symmetric, loop-free adjacency over players 0..N-1."""

    def __init__(self, player_count: int):
        self.player_count = int(player_count)
        self._edges: Dict[Tuple[int, int], EdgeKind] = {}
        self._adj: List[set] = [set() for _ in range(self.player_count)]

    # ============= Construction =============

    def add_edge(self, a: int, b: int, kind: EdgeKind = EdgeKind.PHYSICAL) -> None:
        a, b = int(a), int(b)
        if a == b:
            return
        for p in (a, b):
            if p < 0 or p >= self.player_count:
                raise DomainError(f"player {p} out of range for graph of {self.player_count}")
        key = (a, b) if a < b else (b, a)
        kind = EdgeKind(kind)
        existing = self._edges.get(key)
        self._edges[key] = kind if existing is None else _merge_kinds(existing, kind)
        self._adj[a].add(b)
        self._adj[b].add(a)

    @classmethod
    def from_edges(
        cls,
        player_count: int,
        edges: Iterable[Tuple[int, int]],
        kind: EdgeKind = EdgeKind.PHYSICAL,
    ) -> "NeighborGraph":
        graph = cls(player_count)
        for a, b in edges:
            graph.add_edge(a, b, kind)
        return graph

    @classmethod
    def ring(cls, n: int) -> "NeighborGraph":
        if n < 3:
            return cls.from_edges(n, [(0, 1)] if n == 2 else [])
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def grid(cls, rows: int, cols: int) -> "NeighborGraph":
        graph = cls(rows * cols)
        for r in range(rows):
            for c in range(cols):
                p = r * cols + c
                if c + 1 < cols:
                    graph.add_edge(p, p + 1)
                if r + 1 < rows:
                    graph.add_edge(p, p + cols)
        return graph

    @classmethod
    def complete(cls, n: int) -> "NeighborGraph":
        return cls.from_edges(n, [(a, b) for a in range(n) for b in range(a + 1, n)])

    # ============= Queries =============

    def neighbors(self, i: int) -> List[int]:
        """Sorted neighbors of player i (i itself excluded)."""
        if i < 0 or i >= self.player_count:
            raise DomainError(f"player {i} out of range for graph of {self.player_count}")
        return sorted(self._adj[i])

    def adjacency(self) -> List[List[int]]:
        return [sorted(row) for row in self._adj]

    def edge_kind(self, a: int, b: int) -> EdgeKind:
        key = (a, b) if a < b else (b, a)
        if key not in self._edges:
            raise DomainError(f"no edge between {a} and {b}")
        return self._edges[key]

    def edges(self) -> List[Tuple[int, int, EdgeKind]]:
        return [(a, b, kind) for (a, b), kind in sorted(self._edges.items())]

    def edge_count(self) -> int:
        return len(self._edges)

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    # ============= Combination =============

    def union(self, other: "NeighborGraph") -> "NeighborGraph":
        """Edge union; an edge present with different kinds becomes BOTH."""
        if other.player_count != self.player_count:
            raise DomainError(
                f"cannot merge graphs over {self.player_count} and {other.player_count} players"
            )
        merged = NeighborGraph(self.player_count)
        for graph in (self, other):
            for (a, b), kind in graph._edges.items():
                merged.add_edge(a, b, kind)
        return merged

    def without(self, kind: EdgeKind) -> "NeighborGraph":
        """Drop one relation: physical or semantic. BOTH edges keep the other relation."""
        kind = EdgeKind(kind)
        if kind == EdgeKind.BOTH:
            raise DomainError("ablation removes a single relation, not 'both'")
        keep = EdgeKind.SEMANTIC if kind == EdgeKind.PHYSICAL else EdgeKind.PHYSICAL
        filtered = NeighborGraph(self.player_count)
        for (a, b), k in self._edges.items():
            if k == EdgeKind.BOTH:
                filtered.add_edge(a, b, keep)
            elif k != kind:
                filtered.add_edge(a, b, k)
        return filtered

    def to_dict(self) -> dict:
        return {
            "player_count": self.player_count,
            "edges": [[a, b, kind.value] for a, b, kind in self.edges()],
        }

    def __repr__(self) -> str:
        return f"NeighborGraph(player_count={self.player_count}, edges={self.edge_count()})"
