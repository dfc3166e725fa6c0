"""Low-level helpers for the fixed-width binary file formats.

Both container formats (score streams and fingerprints) are little-endian,
carry a 4-byte magic plus u16 version, and end with a CRC32 over every
preceding byte.
"""

from __future__ import annotations

import struct
import zlib


class FormatError(Exception):
    """Base class for binary container errors."""


class MagicVersionError(FormatError):
    """Wrong magic bytes or unsupported version."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was complete."""


class ChecksumError(FormatError):
    """Trailing CRC32 does not match the payload."""


def append_crc(payload: bytes) -> bytes:
    """Return payload with its CRC32 appended as u32 little-endian."""
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def check_magic_version(data: bytes, magic: bytes, version: int, kind: str, what: str) -> None:
    """Validate the file prefix before anything else, so foreign files fail
    with a type/version error rather than a checksum error."""
    if len(data) < len(magic) + 2:
        raise TruncatedFileError(f"{what}: too short to hold a {kind} header")
    if data[: len(magic)] != magic:
        raise MagicVersionError(f"{what}: bad magic, not a {kind} file")
    (found,) = struct.unpack("<H", data[len(magic) : len(magic) + 2])
    if found != version:
        raise MagicVersionError(f"{what}: unsupported {kind} version {found}")


def split_verify_crc(data: bytes, what: str) -> bytes:
    """Strip and verify the trailing CRC32; return the bare payload."""
    if len(data) < 4:
        raise TruncatedFileError(f"{what}: file shorter than its checksum")
    payload, (stored,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored:
        raise ChecksumError(f"{what}: CRC32 mismatch")
    return payload


def pack_str(s: str) -> bytes:
    """u16 length-prefixed UTF-8 string."""
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for u16 length prefix")
    return struct.pack("<H", len(raw)) + raw


class Reader:
    """Sequential cursor over a byte payload with truncation checking."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"{self.what}: truncated (needed {n} bytes at offset {self.pos})")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u16(self) -> int:
        return self.unpack("<H")[0]

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def u64(self) -> int:
        return self.unpack("<Q")[0]

    def f64(self) -> float:
        return self.unpack("<d")[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} unexpected trailing bytes")
