"""Period segmentation, rolling statistics, unique-item counts and report bundles."""

from .export import LONG_COLUMNS, export_long_format, read_long_format
from .observations import (
    NoveltyObservation,
    compute_observations,
    read_observations,
    stream_histories,
    write_observations,
)
from .periods import PERIOD_ORDER, Period, PeriodBoundaries, assign_period, period_end
from .report import ReportError, ReportSettings, build_report
from .stats import RolledPoint, bootstrap_ci, rolling_series
from .uniques import UndefinedRatioError, candidate_ratio, union_count, unique_item_ratio

__all__ = [
    "LONG_COLUMNS",
    "PERIOD_ORDER",
    "NoveltyObservation",
    "Period",
    "PeriodBoundaries",
    "ReportError",
    "ReportSettings",
    "RolledPoint",
    "UndefinedRatioError",
    "assign_period",
    "bootstrap_ci",
    "build_report",
    "candidate_ratio",
    "compute_observations",
    "export_long_format",
    "period_end",
    "read_long_format",
    "read_observations",
    "rolling_series",
    "stream_histories",
    "union_count",
    "unique_item_ratio",
    "write_observations",
]
