from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from conftest import FIXTURES, T0, snap
from serp_audit.analysis import (
    LONG_COLUMNS,
    NoveltyObservation,
    Period,
    PeriodBoundaries,
    ReportError,
    ReportSettings,
    UndefinedRatioError,
    assign_period,
    bootstrap_ci,
    build_report,
    candidate_ratio,
    compute_observations,
    export_long_format,
    read_long_format,
    read_observations,
    rolling_series,
    stream_histories,
    union_count,
    unique_item_ratio,
    write_observations,
)
from serp_audit.analysis.export import long_format_text
from serp_audit.collection import SyntheticStreamConfig, generate_synthetic
from serp_audit.metrics import RoundOrderError

UTC = timezone.utc


def obs(round_index, novelty, *, t=None, agent="a1", period=Period.I, **kw) -> NoveltyObservation:
    return NoveltyObservation(
        region=kw.pop("region", "Oregon"), engine=kw.pop("engine", "Google"), browser=kw.pop("browser", "Chrome"),
        query_term=kw.pop("query_term", "joe biden"), category=kw.pop("category", "US"), agent_id=agent,
        round_index=round_index, captured_at=t or T0 + timedelta(minutes=21 * round_index), period=period,
        novelty=novelty, discard_reason=None if novelty is not None else "FirstRound", unique_count=kw.pop("unique_count", 0),
    )


class TestPeriods:
    def test_default_boundaries_in_utc(self):
        b = PeriodBoundaries.default()
        assert b.polls_close == datetime(2020, 11, 4, 6, 0, tzinfo=UTC)
        assert b.michigan_call == datetime(2020, 11, 4, 22, 58, tzinfo=UTC)
        assert b.pennsylvania_call == datetime(2020, 11, 7, 16, 25, tzinfo=UTC)

    def test_half_open_intervals(self):
        b = PeriodBoundaries.default()
        eps = timedelta(microseconds=1)
        assert assign_period(b.polls_close - eps, b) is Period.I
        assert assign_period(b.polls_close, b) is Period.II
        assert assign_period(b.michigan_call, b) is Period.III
        assert assign_period(b.pennsylvania_call - eps, b) is Period.III
        assert assign_period(b.pennsylvania_call, b) is Period.IV

    def test_from_mapping(self):
        b = PeriodBoundaries.from_mapping({"timezone": "America/New_York", "polls_close": "2020-11-04T01:00:00",
                                           "michigan_call": "2020-11-04T17:58:00",
                                           "pennsylvania_call": "2020-11-07T11:25:00"})
        assert b == PeriodBoundaries.default()
        assert PeriodBoundaries.from_mapping(b.to_mapping()) == b
        with pytest.raises(ValueError):
            PeriodBoundaries.from_mapping({"polls_close": "2020-11-05T00:00Z", "michigan_call": "2020-11-04T00:00Z",
                                           "pennsylvania_call": "2020-11-06T00:00Z"})
        with pytest.raises(ValueError):
            PeriodBoundaries.from_mapping({"polls_close": "2020-11-05T00:00Z"})


class TestBootstrap:
    def test_seeded_and_reproducible(self):
        values = np.random.default_rng(0).normal(size=40)
        assert bootstrap_ci(values, seed=5) == bootstrap_ci(values, seed=5)
        assert bootstrap_ci(values, seed=5) != bootstrap_ci(values, seed=6)

    def test_matches_reference_loop(self):
        values = np.random.default_rng(1).exponential(size=25)
        rng = np.random.default_rng(9)
        means = [values[rng.integers(0, 25, size=25)].mean() for _ in range(300)]
        expected = np.percentile(means, [2.5, 97.5])
        assert bootstrap_ci(values, resamples=300, seed=9) == pytest.approx(tuple(expected), rel=1e-12)

    def test_chunking_does_not_change_result(self, monkeypatch):
        from serp_audit.analysis import stats

        values = np.random.default_rng(2).uniform(size=30)
        whole = bootstrap_ci(values, seed=3)
        monkeypatch.setattr(stats, "_CHUNK_CELLS", 30 * 7)
        assert bootstrap_ci(values, seed=3) == whole

    def test_degenerate_and_invalid(self):
        assert bootstrap_ci([0.2, 0.2, 0.2]) == (0.2, 0.2)
        assert bootstrap_ci([0.3]) == (0.3, 0.3)
        with pytest.raises(ValueError):
            bootstrap_ci([])
        with pytest.raises(ValueError):
            bootstrap_ci([1, 2], level=1.0)

    def test_clipped_to_range(self):
        low, high = bootstrap_ci([0.0, 0.0, 0.0, 1.0], seed=0)
        assert 0.0 <= low <= high <= 1.0


class TestRolling:
    def test_count_window(self):
        series = [obs(k, k / 10) for k in range(1, 6)] + [obs(0, None)]
        pts = rolling_series(series, window_n=3, resamples=200)
        assert [p.round_index for p in pts] == [1, 2, 3, 4, 5]
        assert [p.n for p in pts] == [1, 2, 3, 3, 3]
        assert pts[0].flagged and not pts[1].flagged
        assert pts[4].mean == pytest.approx(0.4)
        assert all(p.ci_low <= p.mean <= p.ci_high for p in pts)

    def test_rounds_pool_agents(self):
        series = [obs(k, 0.1 * a, agent=f"a{a}") for k in range(4) for a in range(3)]
        pts = rolling_series(series, window_n=2, resamples=100)
        assert [p.n for p in pts] == [3, 6, 6, 6]

    def test_time_window(self):
        series = [obs(k, 0.5) for k in range(10)]
        pts = rolling_series(series, window_n=None, window=timedelta(minutes=63), resamples=50)
        assert [p.n for p in pts] == [1, 2, 3, 3, 3, 3, 3, 3, 3, 3]

    def test_seeded(self):
        series = [obs(k, (k * 37 % 11) / 11) for k in range(30)]
        assert rolling_series(series, seed=4) == rolling_series(series, seed=4)
        with pytest.raises(ValueError):
            rolling_series(series, window_n=None)


class TestUniques:
    def test_candidate_ratio(self):
        assert candidate_ratio(3599, 1110) == 3.24
        assert candidate_ratio(0, 5) == 0.0
        with pytest.raises(UndefinedRatioError):
            candidate_ratio(5, 0)

    def test_pooled_union_and_cutoff(self):
        a = [snap(0, range(50), agent="a1"), snap(1, range(10, 60), agent="a1"),
             snap(0, range(5, 55), agent="a2"), snap(1, range(100, 150), agent="a2")]
        b = [snap(0, range(1000, 1050), agent="b1", term="donald trump")]
        ha = list(stream_histories(a).values())
        hb = list(stream_histories(b).values())
        assert union_count(ha) == 110
        assert union_count(ha, up_to=0) == 55
        assert union_count(ha, up_to=T0) == 55
        assert unique_item_ratio(ha, hb) == (110, 50, 2.2)
        with pytest.raises(ValueError):
            unique_item_ratio(ha, [])


class TestObservations:
    def test_compute_and_round_trip(self, tmp_path):
        snaps = [snap(0), snap(1, range(5, 55)), snap(2, []), snap(3, range(60, 110)),
                 snap(0, agent="a2", term="donald trump")]
        result = compute_observations(snaps)
        assert [(o.agent_id, o.round_index, o.discard_reason) for o in result] == [
            ("a1", 0, "FirstRound"), ("a1", 1, None), ("a1", 3, "PriorRoundMissingOrIncomplete"),
            ("a2", 0, "FirstRound")]
        assert result[1].unique_count == 55 and result[2].unique_count == 105
        write_observations(result, tmp_path / "obs.jsonl")
        assert read_observations(tmp_path / "obs.jsonl") == result

    def test_out_of_order_reports_stream(self):
        with pytest.raises(RoundOrderError, match="agent='a1'.*round=1"):
            compute_observations([snap(2), snap(1)])

    def test_bad_observation_file(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text('{"region": 1}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="bad.jsonl:1"):
            read_observations(tmp_path / "bad.jsonl")


class TestExport:
    def rows(self):
        return [
            obs(0, None, agent="bing-frankfurt-firefox-us-1", region="Frankfurt", engine="Bing", browser="Firefox"),
            obs(1, 0.1, agent="bing-frankfurt-firefox-us-1", region="Frankfurt", engine="Bing", browser="Firefox",
                period=Period.II),
            obs(7, 0.0, agent='agent "q"', query_term="poland abortion, protests", category="topical",
                period=Period.IV),
        ]

    def test_golden_file(self):
        golden = (FIXTURES / "long_format_golden.csv").read_bytes().decode("utf-8")
        assert long_format_text(self.rows()) == golden

    def test_read_back(self, tmp_path):
        export_long_format(self.rows(), tmp_path / "long.csv")
        back = read_long_format(tmp_path / "long.csv")
        assert [r["novelty"] for r in back] == [None, 0.1, 0.0]
        assert back[2]["query"] == "poland abortion, protests"

    def test_header_only_when_empty(self):
        assert long_format_text([]) == ",".join(LONG_COLUMNS) + "\r\n"

    def test_full_precision(self):
        value = 0.12338884845381193
        text = long_format_text([obs(1, value)])
        assert float(list(csv.DictReader(io.StringIO(text)))[0]["novelty"]) == value


def synthetic_inputs(seed=3, rounds=60):
    cfg = SyntheticStreamConfig(pool_size=400, churn_probability=0.2, drop_probability=0.01, missing_round_probability=0.03,
                                seed=seed, agents=2, terms=("joe biden", "donald trump"), category="US",
                                on_pool_exhausted="revise", start_at=datetime(2020, 11, 4, 6, tzinfo=UTC))
    snaps, _ = generate_synthetic(cfg, rounds)
    return snaps, compute_observations(snaps)


class TestReport:
    def settings(self, **kw):
        return ReportSettings(boundaries=PeriodBoundaries.default(), resamples=200, seed=1, **kw)

    def test_bundle_contents(self, tmp_path):
        snaps, observations = synthetic_inputs()
        summary = build_report(observations, tmp_path, self.settings(), snapshots=snaps, config={"k": 1})
        for name in ("summary.json", "config.json", "term_summary.csv", "period_summary.csv", "unique_items.csv",
                     "ratios.csv", "observations_long.csv", "figures/novelty_by_term.png",
                     "figures/novelty_by_period.png", "figures/rolling_oregon.png"):
            assert (tmp_path / name).is_file(), name
        assert json.loads((tmp_path / "summary.json").read_text("utf-8")) == summary
        assert {r["period"] for r in summary["period_summary"]} == {"II", "III"}
        scopes = {r["scope"] for r in summary["unique_items"]}
        assert scopes == {"end of period II", "all"}
        assert all(r["ci_low"] <= r["mean"] <= r["ci_high"] for r in summary["term_summary"])
        usable = [o.novelty for o in observations if o.novelty is not None and o.query_term == "joe biden"]
        row = next(r for r in summary["term_summary"] if r["query"] == "joe biden")
        assert row["n"] == len(usable) and row["mean"] == pytest.approx(np.mean(usable))

    def test_unique_counts_match_histories(self, tmp_path):
        snaps, observations = synthetic_inputs()
        summary = build_report(observations, tmp_path, self.settings(figures=False), snapshots=snaps)
        expected = union_count(h for (a, t), h in stream_histories(snaps).items() if t == "donald trump")
        row = next(r for r in summary["unique_items"] if r["query"] == "donald trump" and r["scope"] == "all")
        assert row["unique_items"] == expected and row["agents"] == 2

    def test_without_snapshots_or_figures(self, tmp_path):
        _, observations = synthetic_inputs()
        summary = build_report(observations, tmp_path, self.settings(figures=False))
        assert summary["unique_items"] is None and summary["figures"] == []
        assert not (tmp_path / "figures").exists()

    def test_periods_rederived_from_settings(self, tmp_path):
        _, observations = synthetic_inputs()
        early = PeriodBoundaries(datetime(2020, 1, 1, tzinfo=UTC), datetime(2020, 1, 2, tzinfo=UTC),
                                 datetime(2020, 1, 3, tzinfo=UTC))
        summary = build_report(observations, tmp_path, ReportSettings(boundaries=early, resamples=50, figures=False))
        assert {r["period"] for r in summary["period_summary"]} == {"IV"}

    def test_deterministic(self, tmp_path):
        snaps, observations = synthetic_inputs()
        for name in ("one", "two"):
            build_report(observations, tmp_path / name, self.settings(), snapshots=snaps)
        files = sorted(p.relative_to(tmp_path / "one") for p in (tmp_path / "one").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "two" / rel).read_bytes(), rel

    def test_empty_input(self, tmp_path):
        with pytest.raises(ReportError):
            build_report([], tmp_path, self.settings())
