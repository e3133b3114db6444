"""Declarative extraction profiles, one per search engine.

Profiles live in a YAML file (see ``docs/profiles.md``); the package ships a
default set in ``serp_audit/data/profiles.yaml``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from ..metrics import canonical_engine


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionRule:
    container: str
    link: str | None = None
    title: str | None = None
    url_attr: str | None = None
    title_attr: str | None = None
    redirect_param: str | None = None


@dataclass(frozen=True)
class EngineProfile:
    engine: str
    rules: tuple[ExtractionRule, ...]
    url_field: str = "href"
    max_results: int = 50
    empty_markers: tuple[str, ...] = ()
    search_url: str | None = None

    def __post_init__(self) -> None:
        if not self.rules:
            raise ProfileError(f"profile {self.engine!r} has no extraction rules")
        if self.max_results < 1:
            raise ProfileError(f"profile {self.engine!r}: max_results must be >= 1")


_RULE_KEYS = {"container", "link", "title", "url_attr", "title_attr", "redirect_param"}
_PROFILE_KEYS = {"engine", "rules", "url_field", "max_results", "empty_markers", "search_url"}


def _profile_from_dict(raw: dict) -> EngineProfile:
    if not isinstance(raw, dict) or "engine" not in raw:
        raise ProfileError(f"profile entry needs an 'engine' key: {raw!r}")
    engine = canonical_engine(str(raw["engine"]))
    unknown = set(raw) - _PROFILE_KEYS
    if unknown:
        raise ProfileError(f"profile {engine!r}: unknown keys {sorted(unknown)}")
    rules = []
    for rule in raw.get("rules") or ():
        if not isinstance(rule, dict) or "container" not in rule:
            raise ProfileError(f"profile {engine!r}: each rule needs a 'container' selector")
        bad = set(rule) - _RULE_KEYS
        if bad:
            raise ProfileError(f"profile {engine!r}: unknown rule keys {sorted(bad)}")
        rules.append(ExtractionRule(**rule))
    return EngineProfile(
        engine=engine,
        rules=tuple(rules),
        url_field=raw.get("url_field", "href"),
        max_results=int(raw.get("max_results", 50)),
        empty_markers=tuple(raw.get("empty_markers") or ()),
        search_url=raw.get("search_url"),
    )


def parse_profiles(data: dict) -> dict[str, EngineProfile]:
    if not isinstance(data, dict) or not isinstance(data.get("profiles"), list):
        raise ProfileError("profile config must contain a 'profiles' list")
    out: dict[str, EngineProfile] = {}
    for raw in data["profiles"]:
        profile = _profile_from_dict(raw)
        if profile.engine in out:
            raise ProfileError(f"duplicate profile for engine {profile.engine!r}")
        out[profile.engine] = profile
    return out


def load_profiles(path: str | Path | None = None) -> dict[str, EngineProfile]:
    """Load profiles from ``path``, or the bundled defaults when ``path`` is None."""
    if path is None:
        text = resources.files("serp_audit.data").joinpath("profiles.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProfileError(f"cannot parse profile config: {exc}") from None
    return parse_profiles(data)
