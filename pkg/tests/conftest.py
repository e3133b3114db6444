from __future__ import annotations

import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from serp_audit.metrics import ResultItem, RoundSnapshot

FIXTURES = Path(__file__).resolve().parent / "fixtures"
T0 = datetime(2020, 11, 3, 12, 31, tzinfo=timezone.utc)


def item(n: int, rank: int, host: str = "news.example.org") -> ResultItem:
    return ResultItem(url=f"https://{host}/story/{n}", title=f"Story {n}", rank=rank)


def snap(round_index: int, ids=None, *, ranks=None, agent="a1", term="joe biden", n=50, **kw) -> RoundSnapshot:
    """Snapshot whose items are stories ``ids`` placed at ``ranks`` (1..len by default)."""
    ids = list(range(n)) if ids is None else list(ids)
    ranks = list(range(1, len(ids) + 1)) if ranks is None else list(ranks)
    return RoundSnapshot(
        agent_id=agent,
        engine=kw.pop("engine", "Google"),
        region=kw.pop("region", "Oregon"),
        browser=kw.pop("browser", "Chrome"),
        query_term=term,
        round_index=round_index,
        captured_at=kw.pop("captured_at", T0 + timedelta(minutes=21 * round_index)),
        items=tuple(item(i, r) for i, r in zip(ids, ranks)),
        expected_count=n,
        **kw,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(module.format_result(number))
