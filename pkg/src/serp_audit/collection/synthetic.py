"""Synthetic snapshot streams with a ground-truth ledger.

Every stream starts from a fresh sample of the item pool. In each later round
every rank independently swaps its item for a never-used pool item with the
churn probability, so the ledger knows exactly which positions are new.
Observation noise (dropped items, missing rounds) is drawn from a separate
generator after the truth is fixed, which keeps the true sequence identical
across noise settings for a given seed.

The ledger also carries the value the metric pipeline must report for the
*observed* stream. It is computed here with its own bookkeeping and a
vectorised weight table, independent of :mod:`serp_audit.metrics`.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from ..metrics import ResultItem, RoundSnapshot, Status
from ..timeutil import format_timestamp, parse_timestamp


class PoolExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticStreamConfig:
    pool_size: int
    churn_probability: float
    list_size: int = 50
    drop_probability: float = 0.0
    missing_round_probability: float = 0.0
    seed: int = 0
    agents: int = 1
    terms: tuple[str, ...] = ("synthetic",)
    term_churn: Mapping[str, float] = field(default_factory=dict)
    rank_biased: bool = False
    on_pool_exhausted: str = "error"
    engine: str = "Google"
    region: str = "Oregon"
    browser: str = "Chrome"
    category: str = "synthetic"
    start_at: datetime = datetime(2020, 11, 3, 12, 31, tzinfo=timezone.utc)
    round_period_minutes: float = 21.0
    term_slot_minutes: float = 7.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "term_churn", dict(self.term_churn))
        probs = {
            "churn_probability": self.churn_probability,
            "drop_probability": self.drop_probability,
            "missing_round_probability": self.missing_round_probability,
            **{f"term_churn[{k}]": v for k, v in self.term_churn.items()},
        }
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.list_size < 1 or self.pool_size < self.list_size:
            raise ValueError("need 1 <= list_size <= pool_size")
        if self.agents < 1 or not self.terms:
            raise ValueError("need at least one agent and one term")
        unknown = set(self.term_churn) - set(self.terms)
        if unknown:
            raise ValueError(f"term_churn names unknown terms {sorted(unknown)}")
        if self.on_pool_exhausted not in ("error", "revise"):
            raise ValueError("on_pool_exhausted must be 'error' or 'revise'")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def churn_for(self, term: str) -> float:
        return self.term_churn.get(term, self.churn_probability)

    @classmethod
    def from_mapping(cls, data: Mapping) -> SyntheticStreamConfig:
        data = dict(data)
        if "start_at" in data and not isinstance(data["start_at"], datetime):
            data["start_at"] = parse_timestamp(str(data["start_at"]))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic config keys {sorted(unknown)}")
        return cls(**data)

    def to_mapping(self) -> dict:
        out = asdict(self)
        out["terms"] = list(self.terms)
        out["start_at"] = format_timestamp(self.start_at)
        return out


@dataclass(frozen=True)
class LedgerRound:
    agent_id: str
    query_term: str
    round_index: int
    new_ranks: tuple[int, ...]
    true_novelty: float
    true_unique_count: int
    status: Status
    observed_ranks: tuple[int, ...]
    expected_novelty: float | None
    expected_discard: str | None
    unique_count: int

    def to_record(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "query_term": self.query_term,
            "round_index": self.round_index,
            "new_ranks": list(self.new_ranks),
            "true_novelty": self.true_novelty,
            "true_unique_count": self.true_unique_count,
            "status": self.status.value,
            "observed_ranks": list(self.observed_ranks),
            "expected_novelty": self.expected_novelty,
            "expected_discard": self.expected_discard,
            "unique_count": self.unique_count,
        }


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-") or "term"


def _weight_table(n: int) -> np.ndarray:
    inv = 1.0 / np.arange(1, n + 1)
    return np.cumsum(inv[::-1])[::-1] / n


def _churn_by_rank(p: float, n: int, rank_biased: bool) -> np.ndarray:
    if not rank_biased:
        return np.full(n, p)
    # linear tilt towards the top ranks with mean p before clipping
    tilt = 2.0 * (n - np.arange(n)) / (n + 1)
    return np.minimum(1.0, p * tilt)


class _Pool:
    def __init__(self, size: int, rng: np.random.Generator, policy: str, term: str):
        self.order = rng.permutation(size)
        self.size = size
        self.cursor = 0
        self.policy = policy
        self.term = term

    def draw(self) -> tuple[int, int]:
        """Next unused (article, revision) pair."""
        if self.cursor >= self.size and self.policy == "error":
            raise PoolExhaustedError(
                f"pool of {self.size} items exhausted for term {self.term!r}; "
                "enlarge pool_size or use on_pool_exhausted='revise'"
            )
        revision, pos = divmod(self.cursor, self.size)
        self.cursor += 1
        return int(self.order[pos]), revision


def _item(term: str, article: int, revision: int, rank: int) -> ResultItem:
    url = f"https://news.example.org/{_slug(term)}/story-{article:06d}"
    title = f"{term.title()} story {article}"
    if revision:
        title += f" (update {revision})"
    return ResultItem(url=url, title=title, rank=rank)


def _stream(config: SyntheticStreamConfig, agent: int, term_idx: int, rounds: int):
    term = config.terms[term_idx]
    n = config.list_size
    agent_id = f"synthetic-{agent + 1:03d}"
    truth_rng = np.random.default_rng([config.seed, agent, term_idx, 0])
    noise_rng = np.random.default_rng([config.seed, agent, term_idx, 1])
    pool = _Pool(config.pool_size, truth_rng, config.on_pool_exhausted, term)
    churn = _churn_by_rank(config.churn_for(term), n, config.rank_biased)
    weights = _weight_table(n)
    period = timedelta(minutes=config.round_period_minutes)
    slot = timedelta(minutes=config.term_slot_minutes)

    current: list[tuple[int, int]] = []
    true_seen: set[tuple[int, int]] = set()
    observed_seen: set[tuple[int, int]] = set()
    prior: Status | None = None
    snapshots, ledger = [], []
    for k in range(rounds):
        if k == 0:
            current = [pool.draw() for _ in range(n)]
            new_mask = np.ones(n, dtype=bool)
        else:
            new_mask = truth_rng.random(n) < churn
            for r in np.flatnonzero(new_mask):
                current[r] = pool.draw()
        true_seen.update(current)
        true_novelty = float(weights[new_mask].sum())

        # observation noise, drawn after the truth is fixed
        if noise_rng.random() < config.missing_round_probability:
            kept = np.zeros(n, dtype=bool)
        else:
            kept = noise_rng.random(n) >= config.drop_probability
        observed = np.flatnonzero(kept)
        status = Status.MISSING if not observed.size else (
            Status.COMPLETE if observed.size == n else Status.INCOMPLETE
        )

        expected_value = expected_discard = None
        if status is not Status.MISSING:
            first_seen = np.array([current[r] not in observed_seen for r in observed])
            if prior is None:
                expected_discard = "FirstRound"
            elif prior is not Status.COMPLETE:
                expected_discard = "PriorRoundMissingOrIncomplete"
            else:
                w = weights[observed]
                expected_value = float(w[first_seen].sum() / w.sum())
            observed_seen.update(current[r] for r in observed)
        prior = status

        snapshots.append(
            RoundSnapshot(
                agent_id=agent_id,
                engine=config.engine,
                region=config.region,
                browser=config.browser,
                query_term=term,
                round_index=k,
                captured_at=config.start_at + k * period + term_idx * slot,
                items=tuple(_item(term, *current[r], rank=int(r) + 1) for r in observed),
                expected_count=n,
                category=config.category,
            )
        )
        ledger.append(
            LedgerRound(
                agent_id=agent_id,
                query_term=term,
                round_index=k,
                new_ranks=tuple(int(r) + 1 for r in np.flatnonzero(new_mask)),
                true_novelty=true_novelty,
                true_unique_count=len(true_seen),
                status=status,
                observed_ranks=tuple(int(r) + 1 for r in observed),
                expected_novelty=expected_value,
                expected_discard=expected_discard,
                unique_count=len(observed_seen),
            )
        )
    return snapshots, ledger


def generate_synthetic(config: SyntheticStreamConfig, rounds: int) -> tuple[list[RoundSnapshot], list[LedgerRound]]:
    """Generate every (agent, term) stream; snapshots come grouped per stream in round order."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    snapshots: list[RoundSnapshot] = []
    ledger: list[LedgerRound] = []
    for agent in range(config.agents):
        for t in range(len(config.terms)):
            snaps, rows = _stream(config, agent, t, rounds)
            snapshots.extend(snaps)
            ledger.extend(rows)
    return snapshots, ledger
