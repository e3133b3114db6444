"""Round timetables for a fleet of search agents.

Each agent is bound to a query category and walks that category's terms in
order, one term slot per term, starting a new round every ``round_period``.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any, Mapping
from zoneinfo import ZoneInfo

from ..metrics import canonical_browser, canonical_engine, canonical_region
from ..timeutil import format_timestamp

DEFAULT_ROUND_PERIOD = timedelta(minutes=21)
DEFAULT_TERM_SLOT = timedelta(minutes=7)

STUDY_CATEGORIES = {
    "US": ("joe biden", "donald trump", "us elections"),
    "topical": ("coronavirus", "poland abortion", "nagorno-karabakh conflict"),
    "stable": ("first world war", "holocaust", "virtual reality"),
}
STUDY_DESIGN = {
    "regions": ("Oregon", "Frankfurt"),
    "browsers": ("Chrome", "Firefox"),
    "engines": ("Baidu", "Bing", "DuckDuckGo", "Google", "Yahoo"),
    "categories": ("US", "topical", "stable"),
    "replicates": 4,
}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    engine: str
    region: str
    browser: str
    category: str


@dataclass(frozen=True)
class Fire:
    at: datetime
    agent: AgentSpec
    query_term: str
    round_index: int


@dataclass(frozen=True)
class SchedulePlan:
    round_period: timedelta
    term_slot: timedelta
    terms: Mapping[str, tuple[str, ...]]
    start_at: datetime
    end_at: datetime
    agents: tuple[AgentSpec, ...]
    first_round: int = 0

    def __post_init__(self) -> None:
        if self.start_at.tzinfo is None or self.end_at.tzinfo is None:
            raise PlanError("plan timestamps must be timezone-aware")
        if self.end_at < self.start_at:
            raise PlanError(f"end_at {self.end_at} precedes start_at {self.start_at}")
        if self.round_period <= timedelta(0) or self.term_slot <= timedelta(0):
            raise PlanError("round_period and term_slot must be positive")
        for category, terms in self.terms.items():
            if not terms:
                raise PlanError(f"category {category!r} has no terms")
            if self.term_slot * len(terms) > self.round_period:
                raise PlanError(
                    f"category {category!r}: {len(terms)} terms x {self.term_slot} "
                    f"overflow the {self.round_period} round"
                )
        for agent in self.agents:
            if agent.category not in self.terms:
                raise PlanError(f"agent {agent.agent_id!r} has unknown category {agent.category!r}")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise PlanError("agent ids must be unique")

    @property
    def round_count(self) -> int:
        return (self.end_at - self.start_at) // self.round_period + 1

    @property
    def round_indices(self) -> range:
        return range(self.first_round, self.first_round + self.round_count)

    def round_start(self, round_index: int) -> datetime:
        return self.start_at + (round_index - self.first_round) * self.round_period

    def fire_time(self, round_index: int, term_position: int) -> datetime:
        """Fire time of the term at 0-based ``term_position`` in ``round_index``."""
        return self.round_start(round_index) + term_position * self.term_slot

    def fires(self) -> list[Fire]:
        """Every (agent, term, round) firing, ordered by time then agent id."""
        out = []
        for k in self.round_indices:
            for agent in self.agents:
                for pos, term in enumerate(self.terms[agent.category]):
                    out.append(Fire(self.fire_time(k, pos), agent, term, k))
        out.sort(key=lambda f: (f.at, f.agent.agent_id))
        return out


def to_utc(value: Any, tz: str) -> datetime:
    if isinstance(value, datetime):
        dt = value
    else:
        try:
            dt = datetime.fromisoformat(str(value).replace("Z", "+00:00"))
        except ValueError:
            raise PlanError(f"bad timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=ZoneInfo(tz))
    return dt.astimezone(timezone.utc)


def _minutes(config: Mapping, key: str, default: timedelta) -> timedelta:
    if key not in config:
        return default
    return timedelta(minutes=float(config[key]))


def expand_design(design: Mapping, categories=None) -> tuple[AgentSpec, ...]:
    """Full factorial of regions x browsers x engines x categories x replicates."""
    regions = design.get("regions", STUDY_DESIGN["regions"])
    browsers = design.get("browsers", STUDY_DESIGN["browsers"])
    engines = design.get("engines", STUDY_DESIGN["engines"])
    cats = design.get("categories", categories or STUDY_DESIGN["categories"])
    replicates = int(design.get("replicates", 1))
    agents = []
    for region, browser, engine, cat, rep in itertools.product(regions, browsers, engines, cats, range(replicates)):
        engine, region, browser = canonical_engine(engine), canonical_region(region), canonical_browser(browser)
        agent_id = f"{engine}-{region}-{browser}-{cat}-{rep + 1}".lower().replace(" ", "_")
        agents.append(AgentSpec(agent_id, engine, region, browser, cat))
    return tuple(agents)


def build_plan(config: Mapping) -> SchedulePlan:
    """Build a timetable from a config mapping (see ``configs/plan_*.yaml``).

    Keys: ``start_at``, ``end_at`` (ISO timestamps; naive ones are read in
    ``timezone``, default UTC), ``round_period_minutes`` (21),
    ``term_slot_minutes`` (7), ``categories`` (name -> ordered terms; the
    study's nine terms by default), and either ``agents`` (explicit list) or
    ``design`` (factorial expansion).
    """
    if "start_at" not in config or "end_at" not in config:
        raise PlanError("plan config needs start_at and end_at")
    tz = config.get("timezone", "UTC")
    categories = config.get("categories") or STUDY_CATEGORIES
    terms = {str(k): tuple(str(t) for t in v) for k, v in categories.items()}
    if "agents" in config:
        agents = []
        for raw in config["agents"]:
            try:
                agents.append(
                    AgentSpec(
                        agent_id=str(raw["agent_id"]),
                        engine=canonical_engine(raw["engine"]),
                        region=canonical_region(raw["region"]),
                        browser=canonical_browser(raw["browser"]),
                        category=str(raw["category"]),
                    )
                )
            except KeyError as exc:
                raise PlanError(f"agent entry missing {exc}") from None
        agents = tuple(agents)
    else:
        agents = expand_design(config.get("design") or {}, tuple(terms))
    return SchedulePlan(
        round_period=_minutes(config, "round_period_minutes", DEFAULT_ROUND_PERIOD),
        term_slot=_minutes(config, "term_slot_minutes", DEFAULT_TERM_SLOT),
        terms=terms,
        start_at=to_utc(config["start_at"], tz),
        end_at=to_utc(config["end_at"], tz),
        agents=agents,
        first_round=int(config.get("first_round", 0)),
    )


def extend_plan(plan: SchedulePlan, end_at: datetime, agents=None, categories=None) -> SchedulePlan:
    """Continue ``plan`` on the same cadence, possibly with fewer agents.

    The returned plan starts at the round after the last one of ``plan`` and
    keeps counting round indices from there, so its ``round_count`` is the
    number of additional rounds.
    """
    if end_at.tzinfo is None:
        raise PlanError("end_at must be timezone-aware")
    last = plan.round_start(plan.round_indices[-1])
    terms = dict(plan.terms)
    if categories is not None:
        terms = {c: plan.terms[c] for c in categories}
    if agents is None:
        agents = tuple(a for a in plan.agents if a.category in terms)
    return SchedulePlan(
        round_period=plan.round_period,
        term_slot=plan.term_slot,
        terms=terms,
        start_at=last + plan.round_period,
        end_at=end_at,
        agents=tuple(agents),
        first_round=plan.round_indices[-1] + 1,
    )


TIMETABLE_COLUMNS = ("agent_id", "engine", "region", "browser", "category", "query_term", "round_index", "fire_at")


def timetable_csv(plan: SchedulePlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(TIMETABLE_COLUMNS)
    for f in plan.fires():
        a = f.agent
        writer.writerow((a.agent_id, a.engine, a.region, a.browser, a.category, f.query_term, f.round_index, format_timestamp(f.at)))
    return buf.getvalue()
