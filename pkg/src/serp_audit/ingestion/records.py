"""The ``.snapshots.jsonl`` log: one JSON record per round, UTF-8, one per line.

Record fields::

    schema_version  "1"
    agent_id, engine, region, browser, category, query_term
    round_index     int >= 0
    captured_at     RFC 3339, UTC
    expected_count  int >= 1
    status          "Complete" | "Incomplete" | "Missing"
    items           [{"rank": int, "url": str, "title": str}, ...]
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterable

from ..metrics import (
    DEFAULT_EXPECTED_COUNT,
    ResultItem,
    RoundSnapshot,
    SnapshotInvariantError,
    Status,
    derive_status,
    prepare_items,
)
from ..timeutil import format_timestamp, parse_timestamp
from .normalize import NormalizationError, normalize_title, normalize_url
from .parser import SnapshotMeta

SCHEMA_VERSION = "1"
SNAPSHOT_SUFFIX = ".snapshots.jsonl"
REJECT_SUFFIX = ".rejects.jsonl"

_REQUIRED = ("agent_id", "engine", "region", "browser", "query_term", "round_index", "captured_at", "items")


class SnapshotFormatError(ValueError):
    def __init__(self, line: int | None, reason: str):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class SchemaVersionError(SnapshotFormatError):
    pass


def rejects_path_for(log_path: str | Path) -> Path:
    path = Path(log_path)
    name = path.name
    if name.endswith(SNAPSHOT_SUFFIX):
        name = name[: -len(SNAPSHOT_SUFFIX)]
    return path.with_name(name + REJECT_SUFFIX)


def snapshot_to_record(snap: RoundSnapshot) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "agent_id": snap.agent_id,
        "engine": snap.engine,
        "region": snap.region,
        "browser": snap.browser,
        "category": snap.category,
        "query_term": snap.query_term,
        "round_index": snap.round_index,
        "captured_at": format_timestamp(snap.captured_at),
        "expected_count": snap.expected_count,
        "status": snap.status.value,
        "items": [{"rank": it.rank, "url": it.url, "title": it.title} for it in snap.items],
    }


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


@contextmanager
def atomic_writer(path: str | Path, newline: str | None = None):
    """Write to a temporary sibling file and rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_jsonl(records: Iterable[dict], target: str | Path | IO[str]) -> int:
    if isinstance(target, (str, Path)):
        with atomic_writer(target, newline="\n") as fh:
            return write_jsonl(records, fh)
    n = 0
    for record in records:
        target.write(dumps_record(record) + "\n")
        n += 1
    return n


def write_snapshots(snapshots: Iterable[RoundSnapshot], target: str | Path | IO[str]) -> int:
    return write_jsonl((snapshot_to_record(s) for s in snapshots), target)


def _item_from_raw(raw, position: int, meta: SnapshotMeta, line: int, quarantine: list | None):
    url, title, rank = raw.get("url"), raw.get("title"), raw.get("rank")
    try:
        if not isinstance(url, str):
            raise NormalizationError("item without a URL")
        item = ResultItem(url=normalize_url(url), title=normalize_title(title or ""), rank=rank)
    except (NormalizationError, SnapshotInvariantError) as exc:
        if not isinstance(rank, int) or rank < 1:
            raise SnapshotFormatError(line, f"item {position}: invalid rank {rank!r}") from None
        if quarantine is not None:
            quarantine.append(meta.reject(str(exc), rank, url, title, line=line))
        return None
    return item


def record_to_snapshot(
    record: dict,
    line: int | None = None,
    quarantine: list | None = None,
    expected_count: int | None = None,
) -> RoundSnapshot:
    """Validate one decoded record and build its snapshot.

    Item URLs and titles are re-normalised; unusable items go to
    ``quarantine``. Duplicate identities keep their best rank and items ranked
    past ``expected_count`` are cut.
    """
    if not isinstance(record, dict):
        raise SnapshotFormatError(line, "record is not a JSON object")
    version = record.get("schema_version")
    if str(version) != SCHEMA_VERSION:
        raise SchemaVersionError(line, f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})")
    missing = [k for k in _REQUIRED if k not in record]
    if missing:
        raise SnapshotFormatError(line, f"missing fields {missing}")
    if not isinstance(record["items"], list):
        raise SnapshotFormatError(line, "items must be a list")
    for key in ("agent_id", "engine", "region", "browser", "query_term"):
        if not isinstance(record[key], str) or not record[key]:
            raise SnapshotFormatError(line, f"{key} must be a non-empty string")
    round_index = record["round_index"]
    if not isinstance(round_index, int) or isinstance(round_index, bool) or round_index < 0:
        raise SnapshotFormatError(line, f"round_index must be a non-negative integer, got {round_index!r}")
    try:
        captured_at = parse_timestamp(record["captured_at"])
    except ValueError as exc:
        raise SnapshotFormatError(line, f"captured_at: {exc}") from None
    n = expected_count if expected_count is not None else record.get("expected_count", DEFAULT_EXPECTED_COUNT)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SnapshotFormatError(line, f"expected_count must be a positive integer, got {n!r}")

    meta = SnapshotMeta(
        agent_id=record["agent_id"],
        engine=record["engine"],
        region=record["region"],
        browser=record["browser"],
        query_term=record["query_term"],
        round_index=round_index,
        captured_at=captured_at,
        expected_count=n,
        category=record.get("category") or "",
    )
    raw_items = record["items"]
    if not all(isinstance(r, dict) for r in raw_items):
        raise SnapshotFormatError(line, "every item must be an object")
    has_rank = ["rank" in r for r in raw_items]
    if raw_items and not any(has_rank):
        raw_items = [dict(r, rank=i) for i, r in enumerate(raw_items, 1)]
    elif not all(has_rank):
        raise SnapshotFormatError(line, "either all items carry a rank or none do")

    if "status" in record:
        try:
            claimed = Status(record["status"])
        except ValueError:
            raise SnapshotFormatError(line, f"unknown status {record['status']!r}") from None
        in_range = sum(1 for r in raw_items if isinstance(r.get("rank"), int) and r["rank"] <= n)
        # an explicit expected_count override re-derives status instead of checking it
        if expected_count is None and claimed is not derive_status(in_range, n):
            raise SnapshotFormatError(
                line, f"status {claimed.value} inconsistent with {in_range} of {n} items"
            )

    items = []
    for pos, raw in enumerate(raw_items, 1):
        item = _item_from_raw(raw, pos, meta, line, quarantine)
        if item is not None:
            items.append(item)
    try:
        return meta.snapshot(prepare_items(items, n))
    except SnapshotInvariantError as exc:
        raise SnapshotFormatError(line, str(exc)) from None


def _missing_between(prev: RoundSnapshot, nxt: RoundSnapshot) -> list[RoundSnapshot]:
    gap = nxt.round_index - prev.round_index
    step = (nxt.captured_at - prev.captured_at) / gap
    out = []
    for k in range(1, gap):
        out.append(
            RoundSnapshot(
                agent_id=prev.agent_id,
                engine=prev.engine,
                region=prev.region,
                browser=prev.browser,
                query_term=prev.query_term,
                round_index=prev.round_index + k,
                captured_at=prev.captured_at + step * k,
                expected_count=prev.expected_count,
                category=prev.category,
            )
        )
    return out


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source, False
    raise TypeError(f"cannot read snapshots from {source!r}")


def read_snapshots(
    source,
    *,
    strict: bool = True,
    rejects: list | None = None,
    expected_count: int | None = None,
    fill_gaps: bool = True,
) -> list[RoundSnapshot]:
    """Read and validate a snapshot log.

    Output is sorted by (agent_id, query_term, round_index). Gaps in a stream's
    round indices are filled with Missing snapshots. In strict mode the first
    bad record raises :class:`SnapshotFormatError`; otherwise bad records are
    appended to ``rejects`` with their line number and skipped. A schema
    version mismatch always raises.
    """
    fh, close = _open_text(source)
    streams: dict[tuple[str, str], dict[int, tuple[int, RoundSnapshot]]] = defaultdict(dict)
    try:
        for line_no, text in enumerate(fh, 1):
            if not text.strip():
                continue
            record = None
            try:
                try:
                    record = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise SnapshotFormatError(line_no, f"invalid JSON: {exc.msg}") from None
                snap = record_to_snapshot(record, line_no, rejects, expected_count)
                stream = streams[snap.stream_key]
                if snap.round_index in stream:
                    first = stream[snap.round_index][0]
                    raise SnapshotFormatError(
                        line_no,
                        f"round {snap.round_index} of stream {snap.stream_key!r} already given on line {first}",
                    )
                stream[snap.round_index] = (line_no, snap)
            except SchemaVersionError:
                raise
            except SnapshotFormatError as exc:
                if strict or rejects is None:
                    raise
                entry = dict(record) if isinstance(record, dict) else {"raw": text.rstrip("\r\n")}
                entry.update(line=exc.line, reason=exc.reason)
                rejects.append(entry)
    finally:
        if close:
            fh.close()

    out: list[RoundSnapshot] = []
    for key in sorted(streams):
        rounds = [streams[key][i][1] for i in sorted(streams[key])]
        for i, snap in enumerate(rounds):
            if fill_gaps and i and snap.round_index - rounds[i - 1].round_index > 1:
                out.extend(_missing_between(rounds[i - 1], snap))
            out.append(snap)
    return out


def group_streams(snapshots: Iterable[RoundSnapshot]) -> dict[tuple[str, str], list[RoundSnapshot]]:
    """Split snapshots by (agent_id, query_term), preserving input order within each."""
    out: dict[tuple[str, str], list[RoundSnapshot]] = defaultdict(list)
    for snap in snapshots:
        out[snap.stream_key].append(snap)
    return dict(out)
