from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

DEFAULT_LEVEL = 0.95
DEFAULT_RESAMPLES = 1000
DEFAULT_WINDOW_N = 18
DEFAULT_WINDOW_DURATION = timedelta(hours=6)

# cap on resample-matrix cells held in memory at once
_CHUNK_CELLS = 2_000_000


def mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def bootstrap_ci(values: Sequence[float], level: float = DEFAULT_LEVEL, resamples: int = DEFAULT_RESAMPLES,
                 seed=None) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean.

    ``resamples`` with-replacement resamples of ``values``; the interval is
    the central ``level`` mass of their means. Bounds are clipped to the
    sample range.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return lo, hi
    rng = np.random.default_rng(seed)
    n = arr.size
    rows = max(1, _CHUNK_CELLS // n)
    means = np.empty(resamples)
    for start in range(0, resamples, rows):
        stop = min(resamples, start + rows)
        idx = rng.integers(0, n, size=(stop - start, n))
        means[start:stop] = arr[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(means, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return min(max(float(low), lo), hi), min(max(float(high), lo), hi)


@dataclass(frozen=True)
class RolledPoint:
    window_end: datetime
    mean: float
    ci_low: float
    ci_high: float
    n: int
    round_index: int | None = None
    flagged: bool = False


def rolling_series(
    observations: Sequence,
    window_n: int | None = DEFAULT_WINDOW_N,
    window: timedelta | None = None,
    level: float = DEFAULT_LEVEL,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> list[RolledPoint]:
    """Trailing mean and bootstrap CI at every round of one series.

    ``observations`` need ``captured_at``, ``round_index`` and ``novelty``
    (None for discarded ones, which are skipped). By default the window holds
    the ``window_n`` most recent rounds that produced a value; all values of
    those rounds are pooled, so with one agent per series it is exactly the
    last ``window_n`` observations. Pass ``window`` (and ``window_n=None``) for
    a trailing time window ``(t - window, t]`` instead.
    """
    if (window_n is None) == (window is None):
        raise ValueError("give exactly one of window_n / window")
    if window_n is not None and window_n < 1:
        raise ValueError("window_n must be >= 1")
    usable = sorted(
        (o for o in observations if o.novelty is not None),
        key=lambda o: (o.round_index, o.captured_at),
    )
    rounds: list[tuple[int, datetime, list[float]]] = []
    for o in usable:
        if rounds and rounds[-1][0] == o.round_index:
            rounds[-1][2].append(o.novelty)
            rounds[-1] = (o.round_index, max(rounds[-1][1], o.captured_at), rounds[-1][2])
        else:
            rounds.append((o.round_index, o.captured_at, [o.novelty]))

    points = []
    for i, (k, end, _) in enumerate(rounds):
        if window_n is not None:
            members = rounds[max(0, i - window_n + 1): i + 1]
        else:
            members = [r for r in rounds[: i + 1] if r[1] > end - window]
        values = [v for r in members for v in r[2]]
        m = mean(values)
        if len(values) < 2:
            points.append(RolledPoint(end, m, m, m, len(values), k, flagged=True))
            continue
        low, high = bootstrap_ci(values, level, resamples, seed=[seed, i])
        points.append(RolledPoint(end, m, min(low, m), max(high, m), len(values), k))
    return points
