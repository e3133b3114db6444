from __future__ import annotations

import unicodedata
from urllib.parse import urlsplit


class NormalizationError(ValueError):
    pass


def normalize_url(raw: str) -> str:
    """Canonical form of an absolute URL used for item identity.

    Scheme and host are lowercased and the fragment is dropped. Path, query
    string and percent-escapes are kept byte for byte, since live pages reuse
    one path with different parameters.
    """
    text = raw.strip()
    text = text.split("#", 1)[0]
    try:
        parts = urlsplit(text)
        host = parts.hostname
    except ValueError as exc:
        raise NormalizationError(f"unparseable URL {raw!r}: {exc}") from None
    if not parts.scheme or not parts.netloc or not host:
        raise NormalizationError(f"not an absolute URL: {raw!r}")
    if any(ch.isspace() for ch in text):
        raise NormalizationError(f"whitespace inside URL: {raw!r}")

    prefix = f"{parts.scheme}://"
    if not text.lower().startswith(prefix.lower()):
        raise NormalizationError(f"not an absolute URL: {raw!r}")
    netloc = parts.netloc
    userinfo, sep, hostport = netloc.rpartition("@")
    netloc = userinfo + sep + hostport.lower()
    rest = text[len(prefix) + len(parts.netloc):]
    return f"{parts.scheme.lower()}://{netloc}{rest}"


def normalize_title(raw: str) -> str:
    """NFC-compose, trim, and collapse whitespace runs. Case is preserved."""
    return " ".join(unicodedata.normalize("NFC", raw).split())
