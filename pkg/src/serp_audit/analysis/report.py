"""Report bundle: summary tables, rolled series, unique-item counts, figures.

Bundle layout::

    config.json              effective run configuration
    summary.json             everything below in one document
    term_summary.csv         novelty per region x engine x query
    period_summary.csv       novelty per region x engine x query x period
    rolling/*.csv            rolled series per region x engine x query
    unique_items.csv         distinct items per region x engine x query x scope
    ratios.csv               pairwise query ratios within a category
    observations_long.csv    long-format export
    figures/*.png
"""

from __future__ import annotations

import csv
import json
import re
import zlib
from collections import defaultdict
from dataclasses import dataclass
from datetime import timedelta
from itertools import combinations
from pathlib import Path
from typing import Sequence

from ..ingestion.records import atomic_writer
from ..metrics import RoundSnapshot
from ..timeutil import format_timestamp
from . import plotting
from .export import export_long_format
from .observations import NoveltyObservation, stream_histories
from .periods import PERIOD_ORDER, PeriodBoundaries, period_end
from .stats import DEFAULT_LEVEL, DEFAULT_RESAMPLES, DEFAULT_WINDOW_N, bootstrap_ci, mean, rolling_series
from .uniques import candidate_ratio


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ReportSettings:
    boundaries: PeriodBoundaries
    window_n: int | None = DEFAULT_WINDOW_N
    window_hours: float | None = None
    resamples: int = DEFAULT_RESAMPLES
    level: float = DEFAULT_LEVEL
    seed: int = 0
    figures: bool = True


def _group_seed(seed: int, *key: str) -> list[int]:
    return [seed, zlib.crc32("\x1f".join(key).encode("utf-8"))]


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower() or "x"


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with atomic_writer(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if row.get(h) is None else row[h] for h in header])


def _summarise(values: list[float], seed, settings: ReportSettings) -> dict:
    low, high = bootstrap_ci(values, settings.level, settings.resamples, seed)
    m = mean(values)
    return {"n": len(values), "mean": m, "ci_low": min(low, m), "ci_high": max(high, m)}


def _unique_sections(snapshots: Sequence[RoundSnapshot], observations, boundaries: PeriodBoundaries):
    histories = stream_histories(snapshots)
    coords = {}
    for snap in snapshots:
        coords.setdefault(snap.stream_key, (snap.region, snap.engine, snap.query_term, snap.category))
    groups = defaultdict(list)
    for key, history in histories.items():
        groups[coords[key]].append(history)

    # period-end cutoffs only where the data spans that instant
    first = min(o.captured_at for o in observations)
    last = max(o.captured_at for o in observations)
    ends = [(p, period_end(p, boundaries)) for p in PERIOD_ORDER[:-1]]
    scopes = [(f"end of period {p.value}", end) for p, end in ends if first < end <= last]
    scopes.append(("all", None))

    unique_rows = []
    counts = {}
    for (region, engine, query, category), hs in sorted(groups.items()):
        for scope, end in scopes:
            keys = set()
            for h in hs:
                keys |= set(h.seen) if end is None else h.keys_up_to(before=end)
            counts[(region, engine, query, scope)] = len(keys)
            unique_rows.append({"region": region, "engine": engine, "category": category,
                                "query": query, "scope": scope, "agents": len(hs), "unique_items": len(keys)})

    ratio_rows = []
    by_condition = defaultdict(set)
    for region, engine, query, category in groups:
        by_condition[(region, engine, category)].add(query)
    for (region, engine, category), queries in sorted(by_condition.items()):
        for qa, qb in combinations(sorted(queries), 2):
            for scope, _ in scopes:
                ca, cb = counts[(region, engine, qa, scope)], counts[(region, engine, qb, scope)]
                ratio = candidate_ratio(ca, cb) if cb else None
                ratio_rows.append({"region": region, "engine": engine, "category": category, "scope": scope,
                                   "query_a": qa, "query_b": qb, "count_a": ca, "count_b": cb, "ratio": ratio})
    return unique_rows, ratio_rows


def build_report(
    observations: Sequence[NoveltyObservation],
    out_dir: str | Path,
    settings: ReportSettings,
    snapshots: Sequence[RoundSnapshot] | None = None,
    config: dict | None = None,
) -> dict:
    """Write the report bundle to ``out_dir`` and return the summary document.

    Periods are re-derived from ``settings.boundaries``. Unique-item counts
    need the snapshots themselves and are skipped (``null``) without them.
    """
    if not observations:
        raise ReportError("no observations to report on")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b = settings.boundaries
    obs = sorted((o.with_period(b) for o in observations),
                 key=lambda o: (o.region, o.engine, o.query_term, o.agent_id, o.round_index))
    usable = [o for o in obs if o.novelty is not None]

    term_groups = defaultdict(list)
    period_groups = defaultdict(list)
    series_groups = defaultdict(list)
    categories = {}
    for o in obs:
        key = (o.region, o.engine, o.query_term)
        categories[key] = o.category
        series_groups[key].append(o)
        if o.novelty is not None:
            term_groups[key].append(o.novelty)
            period_groups[key + (o.period.value,)].append(o.novelty)

    term_rows = []
    for key in sorted(term_groups):
        region, engine, query = key
        row = {"region": region, "engine": engine, "category": categories[key], "query": query}
        row.update(_summarise(term_groups[key], _group_seed(settings.seed, "term", *key), settings))
        term_rows.append(row)

    order = {p.value: i for i, p in enumerate(PERIOD_ORDER)}
    period_rows = []
    for key in sorted(period_groups, key=lambda k: (k[0], k[1], k[2], order[k[3]])):
        region, engine, query, period = key
        row = {"region": region, "engine": engine, "category": categories[key[:3]], "query": query,
               "period": period}
        row.update(_summarise(period_groups[key], _group_seed(settings.seed, "period", *key), settings))
        period_rows.append(row)

    window = timedelta(hours=settings.window_hours) if settings.window_hours else None
    window_n = None if window else settings.window_n
    series = {}
    rolling_index = []
    for key in sorted(series_groups):
        points = rolling_series(series_groups[key], window_n=window_n, window=window, level=settings.level,
                                resamples=settings.resamples, seed=_group_seed(settings.seed, "rolling", *key)[1])
        series[key] = points
        name = f"rolling/{_slug(key[0])}__{_slug(key[1])}__{_slug(key[2])}.csv"
        _write_csv(out / name, ("window_end", "round_index", "n", "mean", "ci_low", "ci_high", "flagged"),
                   ({"window_end": format_timestamp(p.window_end), "round_index": p.round_index, "n": p.n,
                     "mean": p.mean, "ci_low": p.ci_low, "ci_high": p.ci_high,
                     "flagged": "true" if p.flagged else "false"} for p in points))
        rolling_index.append({"region": key[0], "engine": key[1], "query": key[2], "file": name,
                              "points": len(points)})

    unique_rows = ratio_rows = None
    if snapshots is not None:
        unique_rows, ratio_rows = _unique_sections(snapshots, obs, b)
        _write_csv(out / "unique_items.csv",
                   ("region", "engine", "category", "query", "scope", "agents", "unique_items"), unique_rows)
        _write_csv(out / "ratios.csv", ("region", "engine", "category", "scope", "query_a", "query_b",
                                        "count_a", "count_b", "ratio"), ratio_rows)

    stat_cols = ("n", "mean", "ci_low", "ci_high")
    _write_csv(out / "term_summary.csv", ("region", "engine", "category", "query") + stat_cols, term_rows)
    _write_csv(out / "period_summary.csv", ("region", "engine", "category", "query", "period") + stat_cols,
               period_rows)
    export_long_format(obs, out / "observations_long.csv")

    figures = []
    if settings.figures:
        if term_rows:
            figures.append(plotting.plot_term_summary(term_rows, out / "figures/novelty_by_term.png"))
        if period_rows:
            figures.append(plotting.plot_period_summary(period_rows, out / "figures/novelty_by_period.png"))
        for region in sorted({k[0] for k, pts in series.items() if pts}):
            figures.append(plotting.plot_rolling(series, region, b, out / f"figures/rolling_{_slug(region)}.png"))

    summary = {
        "observations": {"total": len(obs), "usable": len(usable), "discarded": len(obs) - len(usable)},
        "boundaries": b.to_mapping(),
        "term_summary": term_rows,
        "period_summary": period_rows,
        "rolling": rolling_index,
        "unique_items": unique_rows,
        "ratios": ratio_rows,
        "figures": [p.relative_to(out).as_posix() for p in figures],
    }
    with atomic_writer(out / "summary.json", newline="\n") as fh:
        json.dump(summary, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    if config is not None:
        with atomic_writer(out / "config.json", newline="\n") as fh:
            json.dump(config, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
    return summary
