from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from conftest import FIXTURES
from serp_audit.cli import main
from serp_audit.ingestion import ArchiveWriter, SnapshotMeta, read_snapshots
from serp_audit.timeutil import parse_timestamp

ROOT = Path(__file__).resolve().parents[1]
HTML = FIXTURES / "html"


def write_yaml(path: Path, data) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def sim_config(tmp_path: Path, **kw) -> Path:
    data = {"rounds": 40, "pool_size": 300, "churn_probability": 0.2, "drop_probability": 0.005,
            "missing_round_probability": 0.05, "agents": 2, "terms": ["joe biden", "donald trump"],
            "on_pool_exhausted": "revise", "start_at": "2020-11-04T03:00:00Z", **kw}
    return write_yaml(tmp_path / "sim.yaml", data)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestPipeline:
    def test_simulate_novelty_report(self, tmp_path, capsys):
        code, out, _ = run(["simulate", "--config", sim_config(tmp_path), "--out", tmp_path / "sim"], capsys)
        assert code == 0 and out.startswith("rounds=160 ")
        log = tmp_path / "sim" / "synthetic.snapshots.jsonl"
        code, out, _ = run(["novelty", "--in", log, "--out", tmp_path / "obs.jsonl"], capsys)
        assert code == 0 and "observations=" in out
        code, out, _ = run(["report", "--in", tmp_path / "obs.jsonl", "--log", log, "--bootstrap", 100,
                            "--out", tmp_path / "rep"], capsys)
        assert code == 0 and "figures=3" in out
        config = json.loads((tmp_path / "rep" / "config.json").read_text("utf-8"))
        assert config["input"] == "obs.jsonl" and config["bootstrap"] == 100 and config["seed"] == 0
        assert len(config["input_sha256"]) == 64

    def test_report_is_byte_stable(self, tmp_path, capsys):
        run(["simulate", "--config", sim_config(tmp_path), "--out", tmp_path / "sim"], capsys)
        log = tmp_path / "sim" / "synthetic.snapshots.jsonl"
        run(["novelty", "--in", log, "--out", tmp_path / "obs.jsonl"], capsys)
        for name in ("a", "b"):
            assert run(["report", "--in", tmp_path / "obs.jsonl", "--bootstrap", 50, "--seed", 3,
                        "--out", tmp_path / name], capsys)[0] == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    def test_seed_precedence(self, tmp_path, capsys, monkeypatch):
        run(["simulate", "--config", sim_config(tmp_path), "--rounds", 5, "--out", tmp_path / "sim"], capsys)
        run(["novelty", "--in", tmp_path / "sim/synthetic.snapshots.jsonl", "--out", tmp_path / "obs.jsonl"], capsys)
        cfg = write_yaml(tmp_path / "report.yaml", {"seed": 11, "bootstrap": 20, "figures": False})

        def seed_of(*extra):
            run(["report", "--in", tmp_path / "obs.jsonl", *extra, "--out", tmp_path / "rep"], capsys)
            return json.loads((tmp_path / "rep/config.json").read_text("utf-8"))["seed"]

        monkeypatch.setenv("SERP_AUDIT_SEED", "5")
        assert seed_of("--no-figures") == 5
        assert seed_of("--config", cfg) == 11
        assert seed_of("--config", cfg, "--seed", 2) == 2

    def test_shipped_configs(self, tmp_path, capsys):
        code, out, _ = run(["plan", "--config", ROOT / "configs/plan_study.yaml", "--out", tmp_path / "plan.csv"], capsys)
        assert code == 0
        assert "base: rounds=80 first_round=0 agents=240" in out
        code, _, _ = run(["simulate", "--config", ROOT / "configs/synthetic.yaml", "--rounds", 10,
                          "--out", tmp_path / "sim"], capsys)
        assert code == 0
        run(["novelty", "--in", tmp_path / "sim/synthetic.snapshots.jsonl", "--out", tmp_path / "obs.jsonl"], capsys)
        code, _, err = run(["report", "--config", ROOT / "configs/report.yaml", "--in", tmp_path / "obs.jsonl",
                            "--bootstrap", 50, "--no-figures", "--out", tmp_path / "rep"], capsys)
        assert code == 0, err


def make_archive(root: Path) -> None:
    writer = ArchiveWriter(root)
    pages = ["google_complete", "google_redirect", "google_empty", "google_complete", "baidu_unknown"]
    for k, name in enumerate(pages):
        meta = SnapshotMeta("g1", "Google", "Oregon", "Chrome", "joe biden", k,
                            parse_timestamp(f"2020-11-04T1{k}:00:00Z"), category="US")
        writer.add(meta, (HTML / f"{name}.html").read_text("utf-8"))


class TestParse:
    def test_archive_to_log(self, tmp_path, capsys):
        make_archive(tmp_path / "arch")
        code, out, _ = run(["parse", "--in", tmp_path / "arch", "--out", tmp_path / "run.snapshots.jsonl"], capsys)
        assert code == 0
        assert out.strip() == "rounds=5 items=112 complete=2 incomplete=1 missing=2 rejects=1"
        rejects = (tmp_path / "run.rejects.jsonl").read_text("utf-8").splitlines()
        assert json.loads(rejects[0])["reason"].startswith("layout:")

    def test_parse_is_idempotent(self, tmp_path, capsys):
        make_archive(tmp_path / "arch")
        run(["parse", "--in", tmp_path / "arch", "--out", tmp_path / "one.jsonl"], capsys)
        run(["parse", "--in", tmp_path / "one.jsonl", "--out", tmp_path / "two.jsonl"], capsys)
        run(["parse", "--in", tmp_path / "two.jsonl", "--out", tmp_path / "three.jsonl"], capsys)
        assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "two.jsonl").read_bytes()
        assert (tmp_path / "two.jsonl").read_bytes() == (tmp_path / "three.jsonl").read_bytes()

    def test_lenient_log_parse_quarantines(self, tmp_path, capsys):
        make_archive(tmp_path / "arch")
        run(["parse", "--in", tmp_path / "arch", "--out", tmp_path / "one.jsonl"], capsys)
        lines = (tmp_path / "one.jsonl").read_text("utf-8").splitlines()
        lines.insert(1, "{broken")
        (tmp_path / "dirty.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        code, out, _ = run(["parse", "--in", tmp_path / "dirty.jsonl", "--out", tmp_path / "clean.jsonl"], capsys)
        assert code == 0 and out.strip().endswith("rejects=1")
        assert json.loads((tmp_path / "clean.jsonl.rejects.jsonl").read_text("utf-8"))["line"] == 2


class TestCollect:
    def test_replay_round_trip(self, tmp_path, capsys):
        plan = write_yaml(tmp_path / "plan.yaml", {
            "start_at": "2020-11-04T10:00:00Z", "end_at": "2020-11-04T11:03:00Z",
            "categories": {"US": ["joe biden"]},
            "agents": [{"agent_id": "g1", "engine": "Google", "region": "Oregon", "browser": "Chrome", "category": "US"}]})
        make_archive(tmp_path / "arch")
        code, out, _ = run(["collect", "--plan", plan, "--replay", tmp_path / "arch", "--out", tmp_path / "log.jsonl"],
                           capsys)
        assert code == 0 and out.strip() == "snapshots=4 incomplete=1 missing=1"
        assert [s.round_index for s in read_snapshots(tmp_path / "log.jsonl")] == [0, 1, 2, 3]
        code, _, err = run(["collect", "--plan", plan, "--replay", tmp_path / "arch", "--out", tmp_path / "log.jsonl"],
                           capsys)
        assert code == 1 and "already holds records" in err


class TestErrors:
    def test_usage_errors_exit_1(self, tmp_path, capsys):
        assert run(["novelty", "--in", "x"], capsys)[0] == 1
        assert run(["frobnicate"], capsys)[0] == 1
        code, _, err = run(["simulate", "--config", tmp_path / "absent.yaml", "--out", tmp_path], capsys)
        assert code == 1 and err.startswith("serp-audit: error[usage]: cannot read config")
        bad = write_yaml(tmp_path / "bad.yaml", {"pool_size": 10, "churn_probability": 2})
        assert run(["simulate", "--config", bad, "--out", tmp_path / "o"], capsys)[0] == 1
        assert run(["plan", "--config", write_yaml(tmp_path / "p.yaml", {"start_at": "x"}), "--out", tmp_path / "p"],
                   capsys)[0] == 1
        assert run(["parse", "--in", tmp_path / "nowhere", "--out", tmp_path / "o.jsonl"], capsys)[0] == 1

    def test_data_errors_exit_2(self, tmp_path, capsys):
        (tmp_path / "bad.jsonl").write_text('{"schema_version": "9"}\n', encoding="utf-8")
        code, _, err = run(["novelty", "--in", tmp_path / "bad.jsonl", "--out", tmp_path / "o.jsonl"], capsys)
        assert code == 2 and "error[data]" in err and "line 1" in err
        code, _, err = run(["parse", "--in", tmp_path / "bad.jsonl", "--out", tmp_path / "o.jsonl"], capsys)
        assert code == 2
        exhausted = sim_config(tmp_path, on_pool_exhausted="error", churn_probability=1.0, pool_size=60)
        assert run(["simulate", "--config", exhausted, "--out", tmp_path / "s"], capsys)[0] == 2
        (tmp_path / "empty.jsonl").write_text("", encoding="utf-8")
        assert run(["report", "--in", tmp_path / "empty.jsonl", "--out", tmp_path / "r"], capsys)[0] == 2

    def test_no_partial_outputs_on_failure(self, tmp_path, capsys):
        (tmp_path / "bad.jsonl").write_text("{nope\n", encoding="utf-8")
        run(["novelty", "--in", tmp_path / "bad.jsonl", "--out", tmp_path / "o.jsonl"], capsys)
        assert not (tmp_path / "o.jsonl").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "serp_audit", "plan", "--config", ROOT / "configs/plan_study.yaml",
                           "--out", tmp_path / "plan.csv"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "plan.csv").read_bytes().startswith(b"agent_id,engine,region")
    if shutil.which("serp-audit"):
        proc = subprocess.run(["serp-audit", "frobnicate"], capture_output=True, text=True)
        assert proc.returncode == 1


class TestSpecExamples:
    def novelty_of(self, tmp_path, capsys, snaps):
        from serp_audit.ingestion import write_snapshots

        write_snapshots(snaps, tmp_path / "log.jsonl")
        code, out, _ = run(["novelty", "--in", tmp_path / "log.jsonl", "--out", tmp_path / "obs.jsonl"], capsys)
        assert code == 0
        return out.strip()

    def test_first_round_only_gives_no_usable_observation(self, tmp_path, capsys):
        from conftest import snap

        assert self.novelty_of(tmp_path, capsys, [snap(0)]) == "observations=1 usable=0 discarded=1"

    def test_two_identical_rounds(self, tmp_path, capsys):
        from conftest import snap

        assert self.novelty_of(tmp_path, capsys, [snap(0), snap(1)]) == "observations=2 usable=1 discarded=1"
        rows = [json.loads(x) for x in (tmp_path / "obs.jsonl").read_text("utf-8").splitlines()]
        assert rows[1]["novelty"] == 0.0

    def report_for(self, tmp_path, capsys, **sim):
        run(["simulate", "--config", sim_config(tmp_path, **sim), "--out", tmp_path / "sim"], capsys)
        log = tmp_path / "sim/synthetic.snapshots.jsonl"
        run(["novelty", "--in", log, "--out", tmp_path / "obs.jsonl"], capsys)
        code, _, err = run(["report", "--in", tmp_path / "obs.jsonl", "--log", log, "--bootstrap", 100, "--no-figures",
                            "--out", tmp_path / "rep"], capsys)
        assert code == 0, err
        return json.loads((tmp_path / "rep/summary.json").read_text("utf-8"))

    def test_zero_churn_reports_zero_novelty(self, tmp_path, capsys):
        summary = self.report_for(tmp_path, capsys, churn_probability=0.0, drop_probability=0.0,
                                  missing_round_probability=0.0)
        assert all(r["mean"] == 0.0 and r["ci_high"] == 0.0 for r in summary["term_summary"])

    def test_churn_mean_close_to_probability(self, tmp_path, capsys):
        summary = self.report_for(tmp_path, capsys, rounds=400, agents=1, terms=["joe biden"], drop_probability=0.0,
                                  missing_round_probability=0.0, churn_probability=0.15)
        assert summary["term_summary"][0]["mean"] == pytest.approx(0.15, abs=0.01)

    def test_asymmetric_terms_show_in_ratios(self, tmp_path, capsys):
        summary = self.report_for(tmp_path, capsys, term_churn={"joe biden": 0.3, "donald trump": 0.1})
        row = next(r for r in summary["ratios"] if r["scope"] == "all")
        assert (row["query_a"], row["query_b"]) == ("donald trump", "joe biden")
        assert row["ratio"] < 0.6

    def test_echoed_config_reproduces_bundle(self, tmp_path, capsys):
        self.report_for(tmp_path, capsys)
        code, _, err = run(["report", "--config", tmp_path / "rep/config.json", "--in", tmp_path / "obs.jsonl",
                            "--log", tmp_path / "sim/synthetic.snapshots.jsonl", "--out", tmp_path / "again"], capsys)
        assert code == 0, err
        for path in (tmp_path / "rep").rglob("*"):
            if path.is_file():
                rel = path.relative_to(tmp_path / "rep")
                assert (tmp_path / "again" / rel).read_bytes() == path.read_bytes(), rel

    def test_unknown_engine_in_archive_is_fatal(self, tmp_path, capsys):
        writer = ArchiveWriter(tmp_path / "arch")
        writer.add(SnapshotMeta("x", "Ecosia", "Oregon", "Chrome", "joe biden", 0,
                                parse_timestamp("2020-11-04T10:00:00Z")), "<html></html>")
        code, _, err = run(["parse", "--in", tmp_path / "arch", "--out", tmp_path / "o.jsonl"], capsys)
        assert code == 2 and "Ecosia" in err
