"""Turning archived result pages and snapshot logs into validated snapshot streams."""

from .archive import ArchiveError, ArchiveWriter, is_archive, read_manifest
from .normalize import NormalizationError, normalize_title, normalize_url
from .parser import ParseLayoutError, ProfileMismatchError, SnapshotMeta, parse_serp
from .profiles import EngineProfile, ExtractionRule, ProfileError, load_profiles, parse_profiles
from .records import (
    SCHEMA_VERSION,
    SchemaVersionError,
    SnapshotFormatError,
    group_streams,
    read_snapshots,
    record_to_snapshot,
    rejects_path_for,
    snapshot_to_record,
    write_jsonl,
    write_snapshots,
)

__all__ = [
    "ArchiveError",
    "ArchiveWriter",
    "is_archive",
    "read_manifest",
    "SCHEMA_VERSION",
    "EngineProfile",
    "ExtractionRule",
    "NormalizationError",
    "ParseLayoutError",
    "ProfileError",
    "ProfileMismatchError",
    "SchemaVersionError",
    "SnapshotFormatError",
    "SnapshotMeta",
    "group_streams",
    "load_profiles",
    "normalize_title",
    "normalize_url",
    "parse_profiles",
    "parse_serp",
    "read_snapshots",
    "record_to_snapshot",
    "rejects_path_for",
    "snapshot_to_record",
    "write_jsonl",
    "write_snapshots",
]
