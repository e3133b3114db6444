from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from urllib.parse import parse_qs, urlsplit

from bs4 import BeautifulSoup

from ..metrics import (
    DEFAULT_EXPECTED_COUNT,
    ResultItem,
    RoundSnapshot,
    canonical_browser,
    canonical_engine,
    canonical_region,
)
from ..timeutil import format_timestamp
from .normalize import NormalizationError, normalize_title, normalize_url
from .profiles import EngineProfile, ExtractionRule

log = logging.getLogger(__name__)


class ParseLayoutError(ValueError):
    """No extraction rule matched and the page is not a recognised empty result page."""


class ProfileMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotMeta:
    agent_id: str
    engine: str
    region: str
    browser: str
    query_term: str
    round_index: int
    captured_at: datetime
    expected_count: int = DEFAULT_EXPECTED_COUNT
    category: str = ""

    def snapshot(self, items=(), **kw) -> RoundSnapshot:
        return RoundSnapshot(
            agent_id=self.agent_id,
            engine=canonical_engine(self.engine),
            region=canonical_region(self.region),
            browser=canonical_browser(self.browser),
            query_term=self.query_term,
            round_index=self.round_index,
            captured_at=self.captured_at,
            items=tuple(items),
            expected_count=self.expected_count,
            category=self.category,
            **kw,
        )

    def reject(self, reason: str, rank: int | None, url, title, line: int | None = None) -> dict:
        """A quarantine entry: snapshot record shape plus ``line`` and ``reason``."""
        return {
            "schema_version": "1",
            "agent_id": self.agent_id,
            "engine": canonical_engine(self.engine),
            "region": canonical_region(self.region),
            "browser": canonical_browser(self.browser),
            "category": self.category,
            "query_term": self.query_term,
            "round_index": self.round_index,
            "captured_at": format_timestamp(self.captured_at),
            "expected_count": self.expected_count,
            "items": [{"rank": rank, "url": url, "title": title}],
            "line": line,
            "reason": reason,
        }


def _unwrap(url: str, param: str | None) -> str:
    if not param or not url:
        return url
    values = parse_qs(urlsplit(url).query).get(param)
    return values[0] if values else url


def _extract(container, rule: ExtractionRule, url_field: str) -> tuple[str | None, str | None]:
    link = container.select_one(rule.link) if rule.link else container
    url = None
    if link is not None:
        url = link.get(rule.url_attr or url_field)
        if isinstance(url, list):
            url = " ".join(url)
    if rule.title:
        node = container.select_one(rule.title)
        title = node.get_text(" ") if node is not None else None
    elif rule.title_attr:
        title = link.get(rule.title_attr) if link is not None else None
    else:
        title = link.get_text(" ") if link is not None else None
    if url is not None:
        url = _unwrap(url, rule.redirect_param)
    return url, title


def parse_serp(
    html: str,
    profile: EngineProfile,
    meta: SnapshotMeta,
    quarantine: list | None = None,
) -> RoundSnapshot:
    """Extract the organic news results of one result page.

    Blocks whose URL or title cannot be normalised are appended to
    ``quarantine`` (when given) and leave a gap at their position; repeated
    identities are dropped without taking a position.
    """
    if canonical_engine(meta.engine) != profile.engine:
        raise ProfileMismatchError(f"profile {profile.engine!r} used for engine {meta.engine!r}")
    if not html or not html.strip():
        raise ParseLayoutError(f"{profile.engine}: empty document")

    soup = BeautifulSoup(html, "html.parser")
    rule = None
    containers = []
    for candidate in profile.rules:
        containers = soup.select(candidate.container)
        if containers:
            rule = candidate
            break
    if rule is None:
        if any(soup.select_one(marker) is not None for marker in profile.empty_markers):
            return meta.snapshot()
        raise ParseLayoutError(f"{profile.engine}: no extraction rule matched the page")

    items = []
    seen = set()
    position = 0
    limit = min(profile.max_results, meta.expected_count)
    for container in containers:
        if position >= limit:
            break
        raw_url, raw_title = _extract(container, rule, profile.url_field)
        try:
            if raw_url is None:
                raise NormalizationError("result block without a link")
            url = normalize_url(raw_url)
            title = normalize_title(raw_title or "")
            if not title:
                raise NormalizationError("empty title")
        except NormalizationError as exc:
            position += 1
            log.debug("quarantined block %d on %s: %s", position, profile.engine, exc)
            if quarantine is not None:
                quarantine.append(meta.reject(str(exc), position, raw_url, raw_title))
            continue
        if (url, title) in seen:
            continue
        seen.add((url, title))
        position += 1
        items.append(ResultItem(url=url, title=title, rank=position))
    return meta.snapshot(items)
