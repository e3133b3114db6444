"""Static figures for the report bundle.

Uses the object-oriented matplotlib API only (no pyplot state), and strips
the software tag from PNG metadata so identical inputs give identical bytes.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib
import matplotlib.dates as mdates
from matplotlib.figure import Figure

from .periods import PERIOD_ORDER, PeriodBoundaries

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.0,
    "svg.hashsalt": "serp-audit",
}
_DPI = 110
_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", dpi=_DPI, metadata={"Software": None})
    return path


def _color_map(names) -> dict[str, str]:
    return {name: _COLORS[i % len(_COLORS)] for i, name in enumerate(sorted(names))}


def _dot_panel(ax, rows, y_key, hue_key, colors, y_labels):
    """Mean with CI whiskers, one y row per ``y_key`` value, dodged by ``hue_key``."""
    hues = sorted({r[hue_key] for r in rows})
    step = 0.8 / max(len(hues), 1)
    ypos = {label: i for i, label in enumerate(y_labels)}
    for j, hue in enumerate(hues):
        sel = [r for r in rows if r[hue_key] == hue]
        ys = [ypos[r[y_key]] - 0.4 + step * (j + 0.5) for r in sel]
        xs = [r["mean"] for r in sel]
        err = [[r["mean"] - r["ci_low"] for r in sel], [r["ci_high"] - r["mean"] for r in sel]]
        ax.errorbar(xs, ys, xerr=err, fmt="o", ms=3, capsize=1.5, color=colors[hue], label=hue)
    ax.set_yticks(range(len(y_labels)))
    ax.set_yticklabels(y_labels)
    ax.set_ylim(-0.6, len(y_labels) - 0.4)
    ax.invert_yaxis()


def plot_term_summary(rows: list[dict], path: Path) -> Path:
    """Novelty per query term, one panel per region, engines as hues."""
    regions = sorted({r["region"] for r in rows})
    terms = sorted({r["query"] for r in rows})
    colors = _color_map({r["engine"] for r in rows})
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(3.2 * len(regions) + 0.8, 0.35 * len(terms) * max(1, len(colors)) ** 0.5 + 1.4))
        axes = fig.subplots(1, len(regions), sharey=True, squeeze=False)[0]
        for ax, region in zip(axes, regions):
            _dot_panel(ax, [r for r in rows if r["region"] == region], "query", "engine", colors, terms)
            ax.set_title(region)
            ax.set_xlabel("novelty")
        axes[-1].legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_period_summary(rows: list[dict], path: Path) -> Path:
    """Novelty per engine, regions as rows and periods as columns, queries as hues."""
    regions = sorted({r["region"] for r in rows})
    periods = [p.value for p in PERIOD_ORDER if any(r["period"] == p.value for r in rows)]
    engines = sorted({r["engine"] for r in rows})
    colors = _color_map({r["query"] for r in rows})
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(2.2 * len(periods) + 0.8, 0.3 * len(engines) * len(regions) * 2 + 1.2))
        grid = fig.subplots(len(regions), len(periods), sharex=True, sharey=True, squeeze=False)
        for i, region in enumerate(regions):
            for j, period in enumerate(periods):
                ax = grid[i][j]
                sel = [r for r in rows if r["region"] == region and r["period"] == period]
                _dot_panel(ax, sel, "engine", "query", colors, engines)
                if i == 0:
                    ax.set_title(f"Period {period}")
                if j == 0:
                    ax.set_ylabel(region)
                if i == len(regions) - 1:
                    ax.set_xlabel("novelty")
        grid[0][-1].legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_rolling(series: dict[tuple[str, str, str], list], region: str, boundaries: PeriodBoundaries,
                 path: Path) -> Path:
    """Rolled novelty per engine (one panel each) with CI bands; event lines split the periods."""
    by_engine = defaultdict(dict)
    for (reg, engine, query), points in series.items():
        if reg == region and points:
            by_engine[engine][query] = points
    engines = sorted(by_engine)
    colors = _color_map({q for e in engines for q in by_engine[e]})
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(7.0, 1.7 * len(engines) + 0.6))
        axes = fig.subplots(len(engines), 1, sharex=True, squeeze=False)[:, 0]
        for ax, engine in zip(axes, engines):
            for query in sorted(by_engine[engine]):
                pts = by_engine[engine][query]
                xs = [mdates.date2num(p.window_end) for p in pts]
                ax.plot(xs, [p.mean for p in pts], color=colors[query], label=query)
                ax.fill_between(xs, [p.ci_low for p in pts], [p.ci_high for p in pts],
                                color=colors[query], alpha=0.2, linewidth=0)
            lo, hi = ax.get_xlim()
            for event in boundaries.events():
                x = mdates.date2num(event)
                if lo <= x <= hi:
                    ax.axvline(x, color="green", linewidth=0.8)
            ax.set_ylabel(engine)
        axes[0].set_title(f"Rolled novelty, {region}")
        axes[0].legend(loc="upper right", frameon=False, ncol=3)
        axes[-1].xaxis.set_major_formatter(mdates.DateFormatter("%b %d %H:%M"))
        fig.tight_layout()
        return _save(fig, path)
