from __future__ import annotations

import logging
from pathlib import Path
from urllib.parse import quote_plus

import requests

from ..ingestion.archive import read_manifest
from ..ingestion.profiles import EngineProfile
from ..metrics import canonical_engine

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


class FetchError(RuntimeError):
    pass


class FetchTimeout(FetchError):
    pass


class Fetcher:
    """Source of result pages for the collection runner.

    ``fetch`` returns the page HTML or raises :class:`FetchError`. The runner
    passes ``agent_id`` and ``round_index`` as keyword context; fetchers that
    do not need them ignore them.
    """

    timeout: float = DEFAULT_TIMEOUT

    def fetch(self, engine: str, region_hint: str, term: str, **context) -> str:
        raise NotImplementedError

    def clean_state(self) -> None:
        """Hook called before every search; browser isolation belongs to the implementation."""


class DirectoryReplayFetcher(Fetcher):
    """Serve pages from an archive directory (see :mod:`serp_audit.ingestion.archive`)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._pages = {
            (meta.agent_id, meta.query_term, meta.round_index): path for meta, path in read_manifest(root)
        }

    def fetch(self, engine, region_hint, term, *, agent_id=None, round_index=None, **context) -> str:
        path = self._pages.get((agent_id, term, round_index))
        if path is None:
            raise FetchError(f"no archived page for agent {agent_id!r}, term {term!r}, round {round_index}")
        try:
            return path.read_text(encoding="utf-8")
        except OSError as exc:
            raise FetchError(str(exc)) from None


class HttpFetcher(Fetcher):
    """Plain HTTP GET against each profile's ``search_url`` template.

    Templates may use ``{query}`` (URL-encoded term) and ``{region}``. No
    JavaScript, no cookies carried between searches, no evasion of bot checks.
    """

    def __init__(self, profiles: dict[str, EngineProfile], timeout: float = DEFAULT_TIMEOUT,
                 headers: dict | None = None, session: requests.Session | None = None):
        self.profiles = profiles
        self.timeout = timeout
        self.headers = headers or {"User-Agent": "Mozilla/5.0 (X11; Linux x86_64; rv:82.0) Gecko/20100101 Firefox/82.0"}
        self.session = session or requests.Session()

    def clean_state(self) -> None:
        self.session.cookies.clear()

    def fetch(self, engine, region_hint, term, **context) -> str:
        profile = self.profiles.get(canonical_engine(engine))
        if profile is None or not profile.search_url:
            raise FetchError(f"no search_url configured for engine {engine!r}")
        url = profile.search_url.format(query=quote_plus(term), region=quote_plus(region_hint))
        try:
            resp = self.session.get(url, headers=self.headers, timeout=self.timeout)
        except requests.Timeout:
            raise FetchTimeout(f"{engine}: timed out after {self.timeout}s") from None
        except requests.RequestException as exc:
            raise FetchError(f"{engine}: {exc}") from None
        if resp.status_code != 200:
            raise FetchError(f"{engine}: HTTP {resp.status_code}")
        return resp.text
