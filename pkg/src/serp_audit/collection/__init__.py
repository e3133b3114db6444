"""Producing snapshot streams: timetables, live or replayed collection, synthetic streams."""

from .fetchers import DirectoryReplayFetcher, FetchError, Fetcher, FetchTimeout, HttpFetcher
from .runner import CollectionAborted, CollectionSummary, SystemClock, run_collection
from .schedule import (
    STUDY_CATEGORIES,
    STUDY_DESIGN,
    AgentSpec,
    Fire,
    PlanError,
    SchedulePlan,
    build_plan,
    extend_plan,
    timetable_csv,
)
from .synthetic import LedgerRound, PoolExhaustedError, SyntheticStreamConfig, generate_synthetic

__all__ = [
    "STUDY_CATEGORIES",
    "STUDY_DESIGN",
    "AgentSpec",
    "CollectionAborted",
    "CollectionSummary",
    "DirectoryReplayFetcher",
    "FetchError",
    "FetchTimeout",
    "Fetcher",
    "Fire",
    "HttpFetcher",
    "LedgerRound",
    "PlanError",
    "PoolExhaustedError",
    "SchedulePlan",
    "SyntheticStreamConfig",
    "SystemClock",
    "build_plan",
    "extend_plan",
    "generate_synthetic",
    "run_collection",
    "timetable_csv",
]
