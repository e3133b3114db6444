"""Per-round novelty observations and their ``.observations.jsonl`` file."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable

from ..ingestion.records import group_streams, write_jsonl
from ..metrics import AgentTermHistory, RoundOrderError, RoundSnapshot, Status, apply_round, round_novelty
from ..timeutil import format_timestamp, parse_timestamp
from .periods import Period, PeriodBoundaries, assign_period


@dataclass(frozen=True)
class NoveltyObservation:
    region: str
    engine: str
    browser: str
    query_term: str
    category: str
    agent_id: str
    round_index: int
    captured_at: datetime
    period: Period
    novelty: float | None
    discard_reason: str | None = None
    unique_count: int | None = None

    @property
    def discarded(self) -> bool:
        return self.novelty is None

    def to_record(self) -> dict:
        return {
            "region": self.region,
            "engine": self.engine,
            "browser": self.browser,
            "query_term": self.query_term,
            "category": self.category,
            "agent_id": self.agent_id,
            "round_index": self.round_index,
            "captured_at": format_timestamp(self.captured_at),
            "period": self.period.value,
            "novelty": self.novelty,
            "discard_reason": self.discard_reason,
            "unique_count": self.unique_count,
        }

    @classmethod
    def from_record(cls, rec: dict) -> NoveltyObservation:
        novelty = rec.get("novelty")
        reason = rec.get("discard_reason")
        if (novelty is None) == (reason is None):
            raise ValueError("observation needs exactly one of novelty / discard_reason")
        if novelty is not None and not 0.0 <= float(novelty) <= 1.0:
            raise ValueError(f"novelty {novelty} outside [0, 1]")
        return cls(
            region=rec["region"],
            engine=rec["engine"],
            browser=rec["browser"],
            query_term=rec["query_term"],
            category=rec.get("category", ""),
            agent_id=rec["agent_id"],
            round_index=int(rec["round_index"]),
            captured_at=parse_timestamp(rec["captured_at"]),
            period=Period(rec["period"]),
            novelty=None if novelty is None else float(novelty),
            discard_reason=reason,
            unique_count=rec.get("unique_count"),
        )

    def with_period(self, boundaries: PeriodBoundaries) -> NoveltyObservation:
        period = assign_period(self.captured_at, boundaries)
        if period is self.period:
            return self
        return NoveltyObservation(**{**self.__dict__, "period": period})


def stream_histories(snapshots: Iterable[RoundSnapshot]) -> dict[tuple[str, str], AgentTermHistory]:
    """Fold every stream into its history (no novelty computed)."""
    out = {}
    for key, snaps in group_streams(snapshots).items():
        history = AgentTermHistory(*key)
        for snap in snaps:
            apply_round(snap, history)
        out[key] = history
    return out


def compute_observations(
    snapshots: Iterable[RoundSnapshot],
    boundaries: PeriodBoundaries | None = None,
) -> list[NoveltyObservation]:
    """One observation per non-missing round, streams in (agent, term) order.

    Snapshots of a stream must arrive in increasing round order.
    """
    boundaries = boundaries or PeriodBoundaries.default()
    out = []
    streams = group_streams(snapshots)
    for key in sorted(streams):
        history = AgentTermHistory(*key)
        for snap in streams[key]:
            try:
                result = None if snap.status is Status.MISSING else round_novelty(snap, history)
                apply_round(snap, history)
            except RoundOrderError as exc:
                raise RoundOrderError(
                    f"agent={snap.agent_id!r} term={snap.query_term!r} round={snap.round_index}: {exc}"
                ) from None
            if result is None:
                continue
            out.append(
                NoveltyObservation(
                    region=snap.region,
                    engine=snap.engine,
                    browser=snap.browser,
                    query_term=snap.query_term,
                    category=snap.category,
                    agent_id=snap.agent_id,
                    round_index=snap.round_index,
                    captured_at=snap.captured_at,
                    period=assign_period(snap.captured_at, boundaries),
                    novelty=result.value,
                    discard_reason=result.discard_reason.value if result.discarded else None,
                    unique_count=history.unique_count,
                )
            )
    return out


def write_observations(observations: Iterable[NoveltyObservation], target) -> int:
    return write_jsonl((o.to_record() for o in observations), target)


def read_observations(source: str | Path) -> list[NoveltyObservation]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, 1):
            if not text.strip():
                continue
            try:
                out.append(NoveltyObservation.from_record(json.loads(text)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{source}:{line_no}: bad observation ({exc})") from None
    return out
