"""Directories of archived result pages.

An archive is a directory holding the HTML files plus a ``manifest.jsonl``
with one line per page::

    {"file": "google/joe-biden/a1/00003.html", "agent_id": "a1", "engine": "Google",
     "region": "Oregon", "browser": "Chrome", "category": "US",
     "query_term": "joe biden", "round_index": 3,
     "captured_at": "2020-11-03T13:34:00Z", "expected_count": 50}

``file`` is relative to the archive directory.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from ..metrics import DEFAULT_EXPECTED_COUNT
from ..timeutil import format_timestamp, parse_timestamp
from .parser import SnapshotMeta

MANIFEST = "manifest.jsonl"


class ArchiveError(ValueError):
    pass


def is_archive(path: str | Path) -> bool:
    return Path(path).is_dir() and (Path(path) / MANIFEST).is_file()


def read_manifest(root: str | Path) -> list[tuple[SnapshotMeta, Path]]:
    root = Path(root)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise ArchiveError(f"{root} has no {MANIFEST}")
    out = []
    with open(manifest, encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, 1):
            if not text.strip():
                continue
            try:
                entry = json.loads(text)
                meta = SnapshotMeta(
                    agent_id=str(entry["agent_id"]),
                    engine=str(entry["engine"]),
                    region=str(entry["region"]),
                    browser=str(entry["browser"]),
                    query_term=str(entry["query_term"]),
                    round_index=int(entry["round_index"]),
                    captured_at=parse_timestamp(entry["captured_at"]),
                    expected_count=int(entry.get("expected_count", DEFAULT_EXPECTED_COUNT)),
                    category=str(entry.get("category", "")),
                )
                path = root / entry["file"]
            except (KeyError, ValueError, TypeError) as exc:
                raise ArchiveError(f"{manifest}:{line_no}: bad manifest entry ({exc})") from None
            out.append((meta, path))
    return out


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower() or "x"


class ArchiveWriter:
    """Append pages to an archive directory, keeping its manifest current."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def add(self, meta: SnapshotMeta, html: str) -> Path:
        rel = Path(_slug(meta.engine), _slug(meta.query_term), _slug(meta.agent_id), f"{meta.round_index:05d}.html")
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(html, encoding="utf-8")
        entry = {
            "file": rel.as_posix(),
            "agent_id": meta.agent_id,
            "engine": meta.engine,
            "region": meta.region,
            "browser": meta.browser,
            "category": meta.category,
            "query_term": meta.query_term,
            "round_index": meta.round_index,
            "captured_at": format_timestamp(meta.captured_at),
            "expected_count": meta.expected_count,
        }
        with open(self.root / MANIFEST, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return path
