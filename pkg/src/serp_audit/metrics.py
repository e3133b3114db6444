"""Rank-weighted novelty of ranked news result lists.

A result list of nominal size ``N`` gives rank ``r`` the weight

    W(r, N) = (1 / N) * sum(1 / c for c in r..N)

which is strictly decreasing in ``r`` and sums to one over a full list. When
only some ranks were collected, the weights are renormalised over the
collected ranks so that absent items are not silently counted as "not new".

Novelty of a round is the weighted share of its items that the
(agent, query term) stream has never observed before. Rounds that cannot be
classified (the first round of a stream, or a round that follows a missing or
incomplete one) yield a discard marker instead of a value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence

__all__ = [
    "DEFAULT_EXPECTED_COUNT",
    "AgentTermHistory",
    "DiscardReason",
    "MetricDomainError",
    "NoveltyResult",
    "ResultItem",
    "RoundOrderError",
    "RoundSnapshot",
    "SnapshotInvariantError",
    "Status",
    "apply_round",
    "canonical_browser",
    "canonical_engine",
    "canonical_region",
    "derive_status",
    "detect_new",
    "prepare_items",
    "rank_weight",
    "rank_weights",
    "rescaled_weight",
    "round_novelty",
]

DEFAULT_EXPECTED_COUNT = 50


class MetricDomainError(ValueError):
    """A weight or novelty was requested outside its mathematical domain."""


class RoundOrderError(ValueError):
    """A round was applied out of order, or to the wrong stream."""


class SnapshotInvariantError(ValueError):
    """A snapshot violates one of its structural invariants."""


class Status(str, Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"
    MISSING = "Missing"


class DiscardReason(str, Enum):
    FIRST_ROUND = "FirstRound"
    PRIOR_ROUND_MISSING_OR_INCOMPLETE = "PriorRoundMissingOrIncomplete"


_ENGINES = {
    "google": "Google",
    "bing": "Bing",
    "duckduckgo": "DuckDuckGo",
    "ddg": "DuckDuckGo",
    "yahoo": "Yahoo",
    "yahoo!": "Yahoo",
    "baidu": "Baidu",
}
_REGIONS = {"oregon": "Oregon", "frankfurt": "Frankfurt"}
_BROWSERS = {"chrome": "Chrome", "firefox": "Firefox"}


def _canonical(table: dict[str, str], name: str) -> str:
    name = name.strip()
    return table.get(name.lower(), name)


def canonical_engine(name: str) -> str:
    """Map known engine spellings to their canonical name; pass others through."""
    return _canonical(_ENGINES, name)


def canonical_region(name: str) -> str:
    return _canonical(_REGIONS, name)


def canonical_browser(name: str) -> str:
    return _canonical(_BROWSERS, name)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def rank_weights(n: int) -> tuple[float, ...]:
    """All weights ``W(1, n) .. W(n, n)`` as a tuple (index 0 is rank 1)."""
    if not isinstance(n, int) or n < 1:
        raise MetricDomainError(f"list size must be a positive integer, got {n!r}")
    tail = [0.0] * n
    acc = 0.0
    for c in range(n, 0, -1):
        acc += 1.0 / c
        tail[c - 1] = acc / n
    return tuple(tail)


def rank_weight(r: int, n: int) -> float:
    """Weight of rank ``r`` (1-based) in a list of nominal size ``n``."""
    weights = rank_weights(n)
    if not isinstance(r, int) or not 1 <= r <= n:
        raise MetricDomainError(f"rank {r!r} outside 1..{n}")
    return weights[r - 1]


def _collected_mass(n: int, collected_ranks: Iterable[int]) -> float:
    weights = rank_weights(n)
    ranks = set(collected_ranks)
    if not ranks:
        raise MetricDomainError("no collected ranks")
    bad = [r for r in ranks if not isinstance(r, int) or not 1 <= r <= n]
    if bad:
        raise MetricDomainError(f"collected ranks outside 1..{n}: {sorted(bad)}")
    return math.fsum(weights[r - 1] for r in ranks)


def rescaled_weight(r: int, n: int, collected_ranks: Iterable[int]) -> float:
    """Weight of rank ``r`` renormalised over the ranks actually collected."""
    ranks = set(collected_ranks)
    mass = _collected_mass(n, ranks)
    if r not in ranks:
        raise MetricDomainError(f"rank {r} was not collected")
    return rank_weight(r, n) / mass


def rescaled_weights(n: int, collected_ranks: Iterable[int]) -> dict[int, float]:
    """Rescaled weight of every collected rank at once."""
    ranks = set(collected_ranks)
    mass = _collected_mass(n, ranks)
    weights = rank_weights(n)
    return {r: weights[r - 1] / mass for r in sorted(ranks)}


# ---------------------------------------------------------------------------
# Items and snapshots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultItem:
    url: str
    title: str
    rank: int

    def __post_init__(self) -> None:
        if not isinstance(self.rank, int) or self.rank < 1:
            raise SnapshotInvariantError(f"rank must be >= 1, got {self.rank!r}")
        if not self.url or not self.title:
            raise SnapshotInvariantError("url and title must be non-empty")

    @property
    def key(self) -> tuple[str, str]:
        return (self.url, self.title)


def derive_status(n_items: int, expected_count: int) -> Status:
    if n_items == 0:
        return Status.MISSING
    if n_items >= expected_count:
        return Status.COMPLETE
    return Status.INCOMPLETE


def prepare_items(items: Iterable[ResultItem], expected_count: int) -> tuple[ResultItem, ...]:
    """Sort by rank, keep the first occurrence of each identity, cut at ``expected_count``.

    Duplicate ranks are a data error and raise.
    """
    ordered = sorted(items, key=lambda it: it.rank)
    out: list[ResultItem] = []
    keys: set[tuple[str, str]] = set()
    last_rank = 0
    for item in ordered:
        if item.rank == last_rank:
            raise SnapshotInvariantError(f"rank {item.rank} appears twice")
        last_rank = item.rank
        if item.rank > expected_count or item.key in keys:
            continue
        keys.add(item.key)
        out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class RoundSnapshot:
    """Ordered items one agent saw for one query term in one round.

    ``status`` is derived from the item count when left as ``None``.
    """

    agent_id: str
    engine: str
    region: str
    browser: str
    query_term: str
    round_index: int
    captured_at: datetime
    items: tuple[ResultItem, ...] = ()
    expected_count: int = DEFAULT_EXPECTED_COUNT
    status: Status | None = None
    category: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if not isinstance(self.expected_count, int) or self.expected_count < 1:
            raise SnapshotInvariantError(f"expected_count must be >= 1, got {self.expected_count!r}")
        if not isinstance(self.round_index, int) or self.round_index < 0:
            raise SnapshotInvariantError(f"round_index must be >= 0, got {self.round_index!r}")
        if self.captured_at.tzinfo is None:
            raise SnapshotInvariantError("captured_at must be timezone-aware")
        prev = 0
        keys = set()
        for item in self.items:
            if item.rank <= prev:
                raise SnapshotInvariantError("item ranks must be strictly increasing")
            if item.rank > self.expected_count:
                raise SnapshotInvariantError(f"rank {item.rank} exceeds expected_count {self.expected_count}")
            if item.key in keys:
                raise SnapshotInvariantError(f"duplicate item identity {item.key!r}")
            keys.add(item.key)
            prev = item.rank
        derived = derive_status(len(self.items), self.expected_count)
        if self.status is None:
            object.__setattr__(self, "status", derived)
        else:
            status = Status(self.status)
            if status is not derived:
                raise SnapshotInvariantError(
                    f"status {status.value} inconsistent with {len(self.items)} of "
                    f"{self.expected_count} items (expected {derived.value})"
                )
            object.__setattr__(self, "status", status)

    @property
    def stream_key(self) -> tuple[str, str]:
        return (self.agent_id, self.query_term)

    @property
    def collected_ranks(self) -> list[int]:
        return [item.rank for item in self.items]


@dataclass(frozen=True)
class NoveltyResult:
    value: float | None = None
    discard_reason: DiscardReason | None = None

    def __post_init__(self) -> None:
        if (self.value is None) == (self.discard_reason is None):
            raise ValueError("exactly one of value / discard_reason must be set")
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"novelty {self.value} outside [0, 1]")

    @property
    def discarded(self) -> bool:
        return self.discard_reason is not None

    @classmethod
    def discard(cls, reason: DiscardReason) -> NoveltyResult:
        return cls(discard_reason=DiscardReason(reason))


# ---------------------------------------------------------------------------
# Stream history
# ---------------------------------------------------------------------------


@dataclass
class AgentTermHistory:
    """Everything one (agent, query term) stream has observed so far.

    ``seen`` maps each item identity to the round index where it first appeared.
    """

    agent_id: str
    query_term: str
    seen: dict[tuple[str, str], int] = field(default_factory=dict)
    last_round_index: int | None = None
    last_round_status: Status | None = None
    round_times: dict[int, datetime] = field(default_factory=dict)

    @property
    def unique_count(self) -> int:
        return len(self.seen)

    def keys_up_to(
        self,
        round_index: int | None = None,
        until: datetime | None = None,
        before: datetime | None = None,
    ) -> set[tuple[str, str]]:
        """Identities first seen at or before a round index / timestamp, or strictly before ``before``."""
        out = set()
        for key, first in self.seen.items():
            if round_index is not None and first > round_index:
                continue
            if until is not None and self.round_times[first] > until:
                continue
            if before is not None and self.round_times[first] >= before:
                continue
            out.add(key)
        return out


def _check_order(snapshot: RoundSnapshot, history: AgentTermHistory) -> None:
    if (snapshot.agent_id, snapshot.query_term) != (history.agent_id, history.query_term):
        raise RoundOrderError(
            f"snapshot for {snapshot.stream_key!r} applied to history of "
            f"{(history.agent_id, history.query_term)!r}"
        )
    if history.last_round_index is not None and snapshot.round_index <= history.last_round_index:
        raise RoundOrderError(
            f"round {snapshot.round_index} of {snapshot.stream_key!r} arrives after "
            f"round {history.last_round_index}"
        )


def detect_new(snapshot: RoundSnapshot, history: AgentTermHistory) -> list[bool]:
    """Per-item flag: has this identity never been seen by the stream before?"""
    _check_order(snapshot, history)
    return [item.key not in history.seen for item in snapshot.items]


def round_novelty(snapshot: RoundSnapshot, history: AgentTermHistory) -> NoveltyResult:
    if snapshot.status is Status.MISSING:
        raise MetricDomainError("missing rounds have no novelty; record a gap instead")
    flags = detect_new(snapshot, history)
    prior = history.last_round_status
    if prior is None:
        return NoveltyResult.discard(DiscardReason.FIRST_ROUND)
    # an unrecorded round between the two is as good as a missing one
    gap = snapshot.round_index != history.last_round_index + 1
    if prior is not Status.COMPLETE or gap:
        return NoveltyResult.discard(DiscardReason.PRIOR_ROUND_MISSING_OR_INCOMPLETE)

    weights = rank_weights(snapshot.expected_count)
    collected = [weights[item.rank - 1] for item in snapshot.items]
    new = [w for w, is_new in zip(collected, flags) if is_new]
    if not new:
        return NoveltyResult(value=0.0)
    if len(new) == len(collected):
        return NoveltyResult(value=1.0)
    return NoveltyResult(value=math.fsum(new) / math.fsum(collected))


def apply_round(snapshot: RoundSnapshot, history: AgentTermHistory) -> AgentTermHistory:
    """Fold a round into the stream's history in place and return the history.

    Identities of every observed item are remembered, whether or not the
    round's novelty was usable.
    """
    _check_order(snapshot, history)
    for item in snapshot.items:
        history.seen.setdefault(item.key, snapshot.round_index)
    history.last_round_index = snapshot.round_index
    history.last_round_status = snapshot.status
    history.round_times[snapshot.round_index] = snapshot.captured_at
    return history


def novelty_series(snapshots: Sequence[RoundSnapshot], history: AgentTermHistory | None = None):
    """Run one stream's snapshots through the metric; yield ``(snapshot, result)``.

    Missing rounds yield ``None`` as the result.
    """
    if history is None and snapshots:
        history = AgentTermHistory(snapshots[0].agent_id, snapshots[0].query_term)
    for snap in snapshots:
        result = None if snap.status is Status.MISSING else round_novelty(snap, history)
        apply_round(snap, history)
        yield snap, result
