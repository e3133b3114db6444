from __future__ import annotations

from datetime import datetime
from typing import Iterable

from ..metrics import AgentTermHistory


class UndefinedRatioError(ZeroDivisionError):
    pass


def candidate_ratio(count_a: int, count_b: int) -> float:
    """``count_a / count_b`` to two decimals."""
    if count_b == 0:
        raise UndefinedRatioError("ratio undefined: second pool has no unique items")
    return round(count_a / count_b, 2)


def _as_list(histories) -> list[AgentTermHistory]:
    if isinstance(histories, AgentTermHistory):
        return [histories]
    return list(histories)


def union_count(histories: Iterable[AgentTermHistory], up_to: int | datetime | None = None) -> int:
    """Distinct item identities across several streams, optionally only those first seen by ``up_to``."""
    keys: set[tuple[str, str]] = set()
    for h in _as_list(histories):
        if up_to is None:
            keys.update(h.seen)
        elif isinstance(up_to, datetime):
            keys |= h.keys_up_to(until=up_to)
        else:
            keys |= h.keys_up_to(round_index=up_to)
    return len(keys)


def unique_item_ratio(histories_a, histories_b, up_to: int | datetime | None = None) -> tuple[int, int, float]:
    """Unique items of pool A vs pool B, each pooled over its streams.

    ``up_to`` is an inclusive round index or timestamp.
    """
    a, b = _as_list(histories_a), _as_list(histories_b)
    if not a or not b:
        raise ValueError("both pools need at least one history")
    count_a, count_b = union_count(a, up_to), union_count(b, up_to)
    return count_a, count_b, candidate_ratio(count_a, count_b)
