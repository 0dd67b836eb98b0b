"""
Coalition games with memoized evaluation.

A Game wraps a deterministic characteristic function v(S) over coalitions of
players 0..N-1. Evaluations are cached; eval_counter counts distinct calls to
the underlying value function. The cache is shared safely between threads:
a coalition requested concurrently by two workers is computed exactly once.
"""

import logging
import threading
from typing import Callable, Dict, FrozenSet, Hashable, Iterable, Optional

from common.errors import DomainError, PreconditionError

logger = logging.getLogger(__name__)

PlayerId = int
Coalition = FrozenSet[int]
ValueFunction = Callable[[Coalition], float]

# Coalitions of games with at most this many players are keyed by a bitmask.
BITMASK_PLAYER_LIMIT = 64


def coalition(members: Iterable[int] = ()) -> Coalition:
    """Build a coalition (set semantics, order-free)."""
    return frozenset(int(m) for m in members)


def coalition_key(members: Coalition, player_count: int) -> Hashable:
    """Cache key: a 64-bit set encoding for small games, a sorted tuple otherwise."""
    if player_count <= BITMASK_PLAYER_LIMIT:
        key = 0
        for m in members:
            key |= 1 << m
        return key
    return tuple(sorted(members))


class Game:
    """
    A characteristic function over N players with a memo table.

    Args:
        player_count: number of players N
        value_fn: deterministic map from a frozenset of player ids to a real
        name: label used in logs and reports
    """

    def __init__(self, player_count: int, value_fn: ValueFunction, name: str = "game"):
        if player_count < 0:
            raise DomainError(f"player_count must be non-negative, got {player_count}")
        self.player_count = int(player_count)
        self.value_fn = value_fn
        self.name = name

        self._cache: Dict[Hashable, float] = {}
        self._pending: Dict[Hashable, threading.Event] = {}
        self._lock = threading.Lock()
        self._eval_counter = 0

    # ============= Evaluation =============

    @property
    def eval_counter(self) -> int:
        with self._lock:
            return self._eval_counter

    @property
    def players(self) -> range:
        return range(self.player_count)

    def grand_coalition(self) -> Coalition:
        return frozenset(range(self.player_count))

    def _check_members(self, members: Coalition) -> None:
        for m in members:
            if m < 0 or m >= self.player_count:
                raise DomainError(
                    f"player {m} out of range for {self.name} with {self.player_count} players"
                )

    def evaluate(self, members: Iterable[int]) -> float:
        """Return v(S), computing it at most once per distinct coalition."""
        s = members if isinstance(members, frozenset) else coalition(members)
        self._check_members(s)
        key = coalition_key(s, self.player_count)

        while True:
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
                event = self._pending.get(key)
                if event is None:
                    event = threading.Event()
                    self._pending[key] = event
                    owner = True
                else:
                    owner = False
            if owner:
                break
            # another worker is computing this coalition
            event.wait()

        try:
            value = float(self.value_fn(s))
        except BaseException:
            with self._lock:
                self._pending.pop(key, None)
            event.set()
            raise

        with self._lock:
            self._cache[key] = value
            self._eval_counter += 1
            self._pending.pop(key, None)
        event.set()
        return value

    def marginal_contribution(self, i: PlayerId, members: Iterable[int]) -> float:
        """Return v(S) - v(S \\ {i}) for a coalition S containing i."""
        s = members if isinstance(members, frozenset) else coalition(members)
        if i not in s:
            raise PreconditionError(f"player {i} is not a member of coalition {sorted(s)}")
        return self.evaluate(s) - self.evaluate(s - {i})

    # ============= Housekeeping =============

    def fork(self, name: Optional[str] = None) -> "Game":
        """A game with the same value function, an empty cache and a zeroed counter."""
        return Game(self.player_count, self.value_fn, name=name or self.name)

    def cache_size(self) -> int:
        with self._lock:
            return len(self._cache)

    def __repr__(self) -> str:
        return f"Game(name={self.name!r}, player_count={self.player_count})"
