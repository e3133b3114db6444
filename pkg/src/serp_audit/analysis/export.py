"""Long-format observation table for mixed-effects modelling in external tools."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import IO, Iterable

from ..ingestion.records import atomic_writer

LONG_COLUMNS = ("region", "engine", "browser", "query", "category", "period", "round", "agent", "novelty", "discarded")


def _row(o) -> tuple:
    return (
        o.region,
        o.engine,
        o.browser,
        o.query_term,
        o.category,
        o.period.value,
        o.round_index,
        o.agent_id,
        "" if o.novelty is None else repr(float(o.novelty)),
        "true" if o.novelty is None else "false",
    )


def export_long_format(observations: Iterable, target: str | Path | IO[str]) -> int:
    """Write one CSV row per observation (RFC 4180, CRLF, header always present)."""
    if isinstance(target, (str, Path)):
        with atomic_writer(target, newline="") as fh:
            return export_long_format(observations, fh)
    writer = csv.writer(target, lineterminator="\r\n")
    writer.writerow(LONG_COLUMNS)
    n = 0
    for o in observations:
        writer.writerow(_row(o))
        n += 1
    return n


def long_format_text(observations: Iterable) -> str:
    buf = io.StringIO()
    export_long_format(observations, buf)
    return buf.getvalue()


def read_long_format(source: str | Path | IO[str]) -> list[dict]:
    """Parse an exported table back into typed rows."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_long_format(fh)
    reader = csv.DictReader(source)
    if tuple(reader.fieldnames or ()) != LONG_COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    out = []
    for row in reader:
        row["round"] = int(row["round"])
        row["discarded"] = row["discarded"] == "true"
        row["novelty"] = None if row["novelty"] == "" else float(row["novelty"])
        out.append(row)
    return out
