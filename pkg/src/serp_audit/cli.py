"""``serp-audit`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error. Errors
go to stderr as one line: ``serp-audit: error[<kind>]: <message>``.

Setting precedence: command-line flags > config file > environment
(``SERP_AUDIT_SEED``) > built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .analysis import (
    PeriodBoundaries,
    ReportError,
    ReportSettings,
    build_report,
    compute_observations,
    read_observations,
    write_observations,
)
from .collection import (
    DirectoryReplayFetcher,
    HttpFetcher,
    PlanError,
    PoolExhaustedError,
    SyntheticStreamConfig,
    build_plan,
    extend_plan,
    generate_synthetic,
    run_collection,
    timetable_csv,
)
from .collection.schedule import expand_design, to_utc
from .ingestion import (
    ParseLayoutError,
    ProfileError,
    SnapshotFormatError,
    SnapshotMeta,
    load_profiles,
    parse_serp,
    read_snapshots,
    rejects_path_for,
    write_jsonl,
    write_snapshots,
)
from .ingestion.archive import ArchiveError, is_archive, read_manifest
from .ingestion.records import atomic_writer
from .metrics import RoundOrderError, Status, canonical_engine

PROG = "serp-audit"
SEED_ENV = "SERP_AUDIT_SEED"
log = logging.getLogger(PROG)


class UsageError(Exception):
    exit_code = 1


class DataError(Exception):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


def _pick(flag, config: dict, key: str, default=None, env: str | None = None):
    if flag is not None:
        return flag
    if config.get(key) is not None:
        return config[key]
    if env and os.environ.get(env):
        return os.environ[env]
    return default


def _seed(flag, config: dict) -> int:
    raw = _pick(flag, config, "seed", 0, env=SEED_ENV)
    try:
        seed = int(raw)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    return seed


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _boundaries(value) -> PeriodBoundaries:
    if value is None:
        return PeriodBoundaries.default()
    try:
        data = value if isinstance(value, dict) else _load_config(value)
        return PeriodBoundaries.from_mapping(data)
    except ValueError as exc:
        raise UsageError(f"bad period boundaries: {exc}") from None


def _summary_counts(snapshots) -> dict:
    return {
        "rounds": len(snapshots),
        "items": sum(len(s.items) for s in snapshots),
        "complete": sum(s.status is Status.COMPLETE for s in snapshots),
        "incomplete": sum(s.status is Status.INCOMPLETE for s in snapshots),
        "missing": sum(s.status is Status.MISSING for s in snapshots),
    }


def _print_counts(counts: dict, out=None) -> None:
    print(" ".join(f"{k}={v}" for k, v in counts.items()), file=out or sys.stdout)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    src = Path(args.input)
    rejects: list = []
    if is_archive(src):
        try:
            profiles = load_profiles(args.profiles)
        except (OSError, ProfileError) as exc:
            raise UsageError(str(exc)) from None
        try:
            pages = read_manifest(src)
        except ArchiveError as exc:
            raise DataError(str(exc)) from None
        snapshots = []
        for meta, page in pages:
            engine = canonical_engine(meta.engine)
            if engine not in profiles:
                raise DataError(f"unknown engine {meta.engine!r} in {src} (no profile for it)")
            if args.expected_count is not None:
                meta = SnapshotMeta(**{**meta.__dict__, "expected_count": args.expected_count})
            try:
                html = page.read_text(encoding="utf-8", errors="replace")
            except OSError as exc:
                raise DataError(f"cannot read {page}: {exc}") from None
            try:
                snapshots.append(parse_serp(html, profiles[engine], meta, rejects))
            except ParseLayoutError as exc:
                rejects.append(meta.reject(f"layout: {exc}", None, None, None))
                snapshots.append(meta.snapshot())
        # re-read through the validator so ordering and gap filling match a log input
        buf = io.StringIO()
        write_snapshots(snapshots, buf)
        buf.seek(0)
        snapshots = read_snapshots(buf)
    elif src.is_file():
        try:
            snapshots = read_snapshots(src, strict=False, rejects=rejects, expected_count=args.expected_count)
        except SnapshotFormatError as exc:
            raise DataError(str(exc)) from None
    else:
        raise UsageError(f"{src} is neither a snapshot log nor an archive directory with a manifest")

    write_snapshots(snapshots, args.out)
    write_jsonl(rejects, rejects_path_for(args.out))
    counts = _summary_counts(snapshots)
    counts["rejects"] = len(rejects)
    _print_counts(counts)
    return 0


def cmd_novelty(args) -> int:
    try:
        snapshots = read_snapshots(args.input, expected_count=args.expected_count)
        observations = compute_observations(snapshots, _boundaries(args.boundaries))
    except (SnapshotFormatError, RoundOrderError) as exc:
        raise DataError(str(exc)) from None
    write_observations(observations, args.out)
    discarded = sum(o.novelty is None for o in observations)
    _print_counts({"observations": len(observations), "usable": len(observations) - discarded,
                   "discarded": discarded})
    return 0


def cmd_report(args) -> int:
    config = _load_config(args.config)
    # paths inside a config file are relative to that file
    for key in ("input", "log", "boundaries"):
        value = config.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            config[key] = str(Path(args.config).parent / value)
    input_path = _pick(args.input, config, "input")
    if not isinstance(input_path, str):
        raise UsageError("report needs --in (the observations file)")
    log_path = _pick(args.log, config, "log")
    if log_path is not None and not isinstance(log_path, str):
        log_path = None
    window_hours = _pick(args.window_hours, config, "window_hours")
    window_n = None if window_hours is not None else int(_pick(args.window_n, config, "window_n", 18))
    settings = ReportSettings(
        boundaries=_boundaries(_pick(args.boundaries, config, "boundaries")),
        window_n=window_n,
        window_hours=None if window_hours is None else float(window_hours),
        resamples=int(_pick(args.bootstrap, config, "bootstrap", 1000)),
        level=float(_pick(args.level, config, "level", 0.95)),
        seed=_seed(args.seed, config),
        figures=bool(_pick(args.figures, config, "figures", True)),
    )
    if settings.resamples < 1 or not 0 < settings.level < 1:
        raise UsageError("bootstrap must be >= 1 and level in (0, 1)")
    try:
        observations = read_observations(input_path)
    except OSError as exc:
        raise UsageError(f"cannot read {input_path}: {exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    recorded = config.get("input_sha256")
    if recorded and recorded != _sha256(Path(input_path)):
        log.warning("%s differs from the input recorded in %s", input_path, args.config)
    snapshots = None
    if log_path is not None:
        try:
            snapshots = read_snapshots(log_path)
        except SnapshotFormatError as exc:
            raise DataError(str(exc)) from None

    effective = {
        "command": "report",
        "input": Path(input_path).name,
        "input_sha256": _sha256(Path(input_path)),
        "log": None if log_path is None else Path(log_path).name,
        "log_sha256": None if log_path is None else _sha256(Path(log_path)),
        "boundaries": settings.boundaries.to_mapping(),
        "window_n": settings.window_n,
        "window_hours": settings.window_hours,
        "bootstrap": settings.resamples,
        "level": settings.level,
        "seed": settings.seed,
        "figures": settings.figures,
    }
    try:
        summary = build_report(observations, args.out, settings, snapshots=snapshots, config=effective)
    except ReportError as exc:
        raise DataError(f"{exc} in {input_path}") from None
    _print_counts({**summary["observations"], "figures": len(summary["figures"])})
    return 0


def _synthetic_config(args) -> tuple[SyntheticStreamConfig, int]:
    config = _load_config(args.config)
    rounds = int(_pick(args.rounds, config, "rounds", 100))
    data = {k: v for k, v in config.items() if k != "rounds"}
    data["seed"] = _seed(args.seed, config)
    try:
        return SyntheticStreamConfig.from_mapping(data), rounds
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad synthetic config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg, rounds = _synthetic_config(args)
    if rounds < 1:
        raise UsageError("rounds must be >= 1")
    try:
        snapshots, ledger = generate_synthetic(cfg, rounds)
    except PoolExhaustedError as exc:
        raise DataError(str(exc)) from None
    out = Path(args.out)
    snapshots.sort(key=lambda s: (s.agent_id, s.query_term, s.round_index))
    ledger.sort(key=lambda r: (r.agent_id, r.query_term, r.round_index))
    write_snapshots(snapshots, out / "synthetic.snapshots.jsonl")
    write_jsonl((r.to_record() for r in ledger), out / "ledger.jsonl")
    with atomic_writer(out / "config.json", newline="\n") as fh:
        json.dump({**cfg.to_mapping(), "rounds": rounds}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _print_counts(_summary_counts(snapshots))
    return 0


def _plans(config: dict):
    try:
        base = build_plan(config)
        plans = [base]
        ext = config.get("extend")
        if ext:
            categories = ext.get("categories")
            design = {**(config.get("design") or {}), **{k: v for k, v in ext.items() if k in ("replicates",)}}
            if categories:
                design["categories"] = categories
            agents = expand_design(design, tuple(base.terms)) if "agents" not in config else None
            plans.append(extend_plan(base, to_utc(ext["end_at"], config.get("timezone", "UTC")),
                                     agents=agents, categories=categories))
    except (PlanError, KeyError, ValueError) as exc:
        raise UsageError(f"bad plan config: {exc}") from None
    return plans


def cmd_plan(args) -> int:
    plans = _plans(_load_config(args.config))
    text = timetable_csv(plans[0])
    for extra in plans[1:]:
        text += timetable_csv(extra).split("\r\n", 1)[1]
    with atomic_writer(args.out, newline="") as fh:
        fh.write(text)
    for i, plan in enumerate(plans):
        label = "base" if i == 0 else "extension"
        print(f"{label}: rounds={plan.round_count} first_round={plan.first_round} "
              f"agents={len(plan.agents)} fires={sum(len(plan.terms[a.category]) for a in plan.agents) * plan.round_count}")
    return 0


def cmd_collect(args) -> int:
    plans = _plans(_load_config(args.plan))
    out = Path(args.out)
    if out.exists() and out.stat().st_size:
        raise UsageError(f"{out} already holds records; collect writes a fresh log")
    try:
        profiles = load_profiles(args.profiles)
    except (OSError, ProfileError) as exc:
        raise UsageError(str(exc)) from None
    if args.replay:
        try:
            fetcher = DirectoryReplayFetcher(args.replay)
        except ArchiveError as exc:
            raise UsageError(str(exc)) from None
    else:
        fetcher = HttpFetcher(profiles, timeout=args.timeout)
    total = None
    for plan in plans:
        summary = run_collection(plan, fetcher, args.out, profiles, expected_count=args.expected_count,
                                 realtime=args.realtime, archive_dir=args.archive, max_workers=args.workers)
        total = summary if total is None else total
        if total is not summary:
            total.snapshots += summary.snapshots
            total.missing += summary.missing
            total.incomplete += summary.incomplete
    _print_counts({"snapshots": total.snapshots, "incomplete": total.incomplete, "missing": total.missing})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="archived HTML or a snapshot log -> normalised snapshot log")
    p.add_argument("--profiles", help="engine profile YAML (bundled defaults if omitted)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--expected-count", type=int)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("novelty", help="snapshot log -> novelty observations")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--expected-count", type=int, help="override the per-record expected_count")
    p.add_argument("--boundaries", help="period boundaries YAML")
    p.set_defaults(func=cmd_novelty)

    p = sub.add_parser("report", help="observations -> report bundle")
    p.add_argument("--in", dest="input")
    p.add_argument("--log", help="snapshot log, enables unique-item counts and ratios")
    p.add_argument("--config", help="run config (e.g. a bundle's config.json)")
    p.add_argument("--boundaries")
    window = p.add_mutually_exclusive_group()
    window.add_argument("--window-n", type=int)
    window.add_argument("--window-hours", type=float)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="synthetic snapshot log plus ground-truth ledger")
    p.add_argument("--config", required=True)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="collection timetable as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("collect", help="run a plan against an archive replay or live HTTP")
    p.add_argument("--plan", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--replay", help="archive directory to replay")
    src.add_argument("--http", action="store_true", help="fetch live pages")
    p.add_argument("--profiles")
    p.add_argument("--out", required=True)
    p.add_argument("--archive", help="also archive fetched HTML here")
    p.add_argument("--expected-count", type=int, default=50)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--realtime", action="store_true", help="wait for each scheduled fire time")
    p.set_defaults(func=cmd_collect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, DataError) as exc:
        kind = "usage" if isinstance(exc, UsageError) else "data"
        print(f"{PROG}: error[{kind}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"{PROG}: error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
