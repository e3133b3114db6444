from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..ingestion.archive import ArchiveWriter
from ..ingestion.parser import ParseLayoutError, SnapshotMeta, parse_serp
from ..ingestion.profiles import EngineProfile
from ..ingestion.records import dumps_record, snapshot_to_record
from ..metrics import DEFAULT_EXPECTED_COUNT, RoundSnapshot, Status
from .fetchers import FetchError, Fetcher
from .schedule import Fire, SchedulePlan

log = logging.getLogger(__name__)


class CollectionAborted(RuntimeError):
    pass


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


@dataclass
class CollectionSummary:
    log_path: Path
    snapshots: int = 0
    missing: int = 0
    incomplete: int = 0
    max_drift_seconds: float = 0.0
    warnings: list[str] = field(default_factory=list)


def _collect_one(fire: Fire, fetcher: Fetcher, profiles, expected_count, quarantine):
    agent = fire.agent
    meta = SnapshotMeta(
        agent_id=agent.agent_id,
        engine=agent.engine,
        region=agent.region,
        browser=agent.browser,
        query_term=fire.query_term,
        round_index=fire.round_index,
        captured_at=fire.at,
        expected_count=expected_count,
        category=agent.category,
    )
    fetcher.clean_state()
    try:
        html = fetcher.fetch(agent.engine, agent.region, fire.query_term,
                             agent_id=agent.agent_id, round_index=fire.round_index)
    except FetchError as exc:
        return meta, None, meta.snapshot(), f"fetch failed for {agent.agent_id}/{fire.query_term}/round {fire.round_index}: {exc}"
    profile = profiles.get(agent.engine)
    if profile is None:
        return meta, html, meta.snapshot(), f"no profile for engine {agent.engine!r}"
    try:
        snap = parse_serp(html, profile, meta, quarantine)
    except ParseLayoutError as exc:
        return meta, html, meta.snapshot(), f"unparseable page for {agent.agent_id}/{fire.query_term}/round {fire.round_index}: {exc}"
    return meta, html, snap, None


def run_collection(
    plan: SchedulePlan,
    fetcher: Fetcher,
    log_path: str | Path,
    profiles: dict[str, EngineProfile],
    *,
    expected_count: int = DEFAULT_EXPECTED_COUNT,
    realtime: bool = False,
    clock=None,
    archive_dir: str | Path | None = None,
    max_workers: int = 1,
    quarantine: list | None = None,
) -> CollectionSummary:
    """Fire every search of ``plan`` and append one snapshot record per search to ``log_path``.

    Searches sharing a fire time run concurrently (up to ``max_workers``);
    their records are appended in agent order. With ``realtime`` the runner
    waits for each fire time on ``clock``; otherwise it replays as fast as the
    fetcher allows and stamps records with the scheduled time. Failed fetches
    and unparseable pages become Missing rounds. A write failure leaves a
    ``<log>.partial`` marker and raises :class:`CollectionAborted`.
    """
    log_path = Path(log_path)
    clock = clock or SystemClock()
    archive = ArchiveWriter(archive_dir) if archive_dir is not None else None
    summary = CollectionSummary(log_path=log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    pool = ThreadPoolExecutor(max_workers=max_workers) if max_workers > 1 else None
    try:
        with open(log_path, "a", encoding="utf-8", newline="\n") as out:
            for at, group in itertools.groupby(plan.fires(), key=lambda f: f.at):
                group = list(group)
                if realtime:
                    wait = (at - clock.now()).total_seconds()
                    if wait > 0:
                        clock.sleep(wait)
                    drift = abs((clock.now() - at).total_seconds())
                    summary.max_drift_seconds = max(summary.max_drift_seconds, drift)
                args = (fetcher, profiles, expected_count, quarantine)
                if pool is not None:
                    results = list(pool.map(lambda f: _collect_one(f, *args), group))
                else:
                    results = [_collect_one(f, *args) for f in group]
                for meta, html, snap, warning in results:
                    if warning:
                        log.warning(warning)
                        summary.warnings.append(warning)
                    if archive is not None and html is not None:
                        archive.add(meta, html)
                    _append(out, snap, log_path)
                    summary.snapshots += 1
                    summary.missing += snap.status is Status.MISSING
                    summary.incomplete += snap.status is Status.INCOMPLETE
    finally:
        if pool is not None:
            pool.shutdown()
    return summary


def _append(out, snap: RoundSnapshot, log_path: Path) -> None:
    try:
        out.write(dumps_record(snapshot_to_record(snap)) + "\n")
        out.flush()
    except OSError as exc:
        marker = log_path.with_name(log_path.name + ".partial")
        try:
            marker.write_text(f"aborted after write failure: {exc}\n", encoding="utf-8")
        except OSError:
            pass
        raise CollectionAborted(f"cannot append to {log_path}: {exc}") from exc
