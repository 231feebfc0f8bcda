"""Versioned, checksummed binary container shared by all on-disk artifacts.

Layout (all integers little-endian)::

    magic            8 bytes, artifact kind (e.g. b"CIRSDSET")
    format_version   uint16
    header_length    uint32
    header           header_length bytes, UTF-8 JSON, sorted keys
    payload_length   uint64
    payload          payload_length bytes, artifact specific
    sha256           32 bytes, digest of every preceding byte
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

_PREFIX = struct.Struct("<8sHI")
_PAYLOAD_LEN = struct.Struct("<Q")
_DIGEST_LEN = 32


class FormatError(ValueError):
    """Raised for unreadable, truncated, corrupted or foreign artifact files."""


def dumps_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def pack(magic: bytes, version: int, header: dict, payload: bytes) -> bytes:
    head = dumps_header(header)
    body = _PREFIX.pack(magic, version, len(head)) + head + _PAYLOAD_LEN.pack(len(payload)) + payload
    return body + hashlib.sha256(body).digest()


def unpack(blob: bytes, magic: bytes, version: int) -> tuple[dict, bytes]:
    if len(blob) < _PREFIX.size:
        raise FormatError("truncated file: missing preamble")
    got_magic, got_version, head_len = _PREFIX.unpack_from(blob, 0)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    if got_version != version:
        raise FormatError(f"unsupported format version {got_version}, expected {version}")
    offset = _PREFIX.size
    if len(blob) < offset + head_len + _PAYLOAD_LEN.size:
        raise FormatError("truncated file: header")
    head = blob[offset : offset + head_len]
    offset += head_len
    (payload_len,) = _PAYLOAD_LEN.unpack_from(blob, offset)
    offset += _PAYLOAD_LEN.size
    end = offset + payload_len
    if len(blob) != end + _DIGEST_LEN:
        raise FormatError("truncated file: payload or checksum")
    if hashlib.sha256(blob[:end]).digest() != blob[end:]:
        raise FormatError("checksum mismatch")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupted header: {exc}") from exc
    return header, blob[offset:end]


def write(path, magic: bytes, version: int, header: dict, payload: bytes) -> None:
    Path(path).write_bytes(pack(magic, version, header, payload))


def read(path, magic: bytes, version: int) -> tuple[dict, bytes]:
    return unpack(Path(path).read_bytes(), magic, version)
