"""Image byte-level helpers: format validation and content hashing."""

from __future__ import annotations

import hashlib
from io import BytesIO

from PIL import Image

# Raster formats accepted by the validity filter.
SUPPORTED_FORMATS = frozenset({"PNG", "JPEG", "GIF", "BMP"})


def image_sha1(data: bytes) -> str:
    """Lowercase-hex SHA-1 of the raw image bytes."""
    return hashlib.sha1(data).hexdigest()


def validate_image_bytes(data: bytes) -> str | None:
    """Return None when the bytes decode as a supported raster image.

    Otherwise return a short reason code: "empty", "undecodable",
    "unsupported-format", or "corrupt" (includes truncated payloads).
    """
    if not data:
        return "empty"
    try:
        with Image.open(BytesIO(data)) as img:
            fmt = img.format
    except Exception:
        return "undecodable"
    if fmt not in SUPPORTED_FORMATS:
        return "unsupported-format"
    try:
        # Full decode catches truncation that header sniffing misses.
        with Image.open(BytesIO(data)) as img:
            img.load()
    except Exception:
        return "corrupt"
    return None
