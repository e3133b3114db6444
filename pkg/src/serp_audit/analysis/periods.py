from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping
from zoneinfo import ZoneInfo

from ..timeutil import format_timestamp

_ET = ZoneInfo("America/New_York")


class Period(str, Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


PERIOD_ORDER = (Period.I, Period.II, Period.III, Period.IV)


def _utc(value, tz: str = "UTC") -> datetime:
    if isinstance(value, datetime):
        dt = value
    else:
        dt = datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=ZoneInfo(tz))
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class PeriodBoundaries:
    """Three event times splitting a collection into periods I-IV.

    Each event opens the later period: ``t == polls_close`` is in period II.
    """

    polls_close: datetime
    michigan_call: datetime
    pennsylvania_call: datetime

    def __post_init__(self) -> None:
        times = (self.polls_close, self.michigan_call, self.pennsylvania_call)
        if any(t.tzinfo is None for t in times):
            raise ValueError("boundaries must be timezone-aware")
        if not times[0] < times[1] < times[2]:
            raise ValueError("boundaries must be strictly increasing")

    @classmethod
    def default(cls) -> PeriodBoundaries:
        """Poll close, Michigan call and Pennsylvania call of the 2020 US election."""
        return cls(
            polls_close=datetime(2020, 11, 4, 1, 0, tzinfo=_ET).astimezone(timezone.utc),
            michigan_call=datetime(2020, 11, 4, 17, 58, tzinfo=_ET).astimezone(timezone.utc),
            pennsylvania_call=datetime(2020, 11, 7, 11, 25, tzinfo=_ET).astimezone(timezone.utc),
        )

    @classmethod
    def from_mapping(cls, data: Mapping) -> PeriodBoundaries:
        tz = data.get("timezone", "UTC")
        try:
            return cls(*(_utc(data[k], tz) for k in ("polls_close", "michigan_call", "pennsylvania_call")))
        except KeyError as exc:
            raise ValueError(f"boundaries config missing {exc}") from None

    def to_mapping(self) -> dict:
        return {
            "polls_close": format_timestamp(self.polls_close),
            "michigan_call": format_timestamp(self.michigan_call),
            "pennsylvania_call": format_timestamp(self.pennsylvania_call),
        }

    def events(self) -> tuple[datetime, datetime, datetime]:
        return (self.polls_close, self.michigan_call, self.pennsylvania_call)


def assign_period(t: datetime, b: PeriodBoundaries) -> Period:
    if t < b.polls_close:
        return Period.I
    if t < b.michigan_call:
        return Period.II
    if t < b.pennsylvania_call:
        return Period.III
    return Period.IV


def period_end(period: Period, b: PeriodBoundaries) -> datetime | None:
    """Instant the period closes (exclusive), or None for the open-ended last period."""
    return {Period.I: b.polls_close, Period.II: b.michigan_call, Period.III: b.pennsylvania_call}.get(Period(period))
