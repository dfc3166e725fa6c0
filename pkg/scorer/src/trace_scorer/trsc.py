"""Writer for the ".trsc" score-stream container.

Byte layout (little-endian):
    magic "TRSC" | version u16 = 1 | reserved u16 = 0
    vocab_size u32 | context_window u32 | token_count u64
    evaluator_id (u16 length-prefixed UTF-8) | doc_id (same)
    token_count x (rank u32, entropy f32)
    CRC32 u32 over all preceding bytes

This module deliberately has no dependency on the consumer package; the
byte layout is the contract between the two.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"TRSC"
VERSION = 1

_RECORD_DTYPE = np.dtype([("rank", "<u4"), ("entropy", "<f4")])


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for u16 length prefix")
    return struct.pack("<H", len(raw)) + raw


def stream_bytes(
    doc_id: str,
    evaluator_id: str,
    vocab_size: int,
    context_window: int,
    ranks: np.ndarray,
    entropies: np.ndarray,
) -> bytes:
    ranks = np.ascontiguousarray(ranks, dtype=np.uint32)
    entropies = np.ascontiguousarray(entropies, dtype=np.float32)
    if len(ranks) != len(entropies):
        raise ValueError("rank/entropy length mismatch")
    head = MAGIC + struct.pack("<HH", VERSION, 0)
    head += struct.pack("<IIQ", vocab_size, context_window, len(ranks))
    head += _pack_str(evaluator_id) + _pack_str(doc_id)
    records = np.empty(len(ranks), dtype=_RECORD_DTYPE)
    records["rank"] = ranks
    records["entropy"] = entropies
    payload = head + records.tobytes()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def write_stream_file(path: str | Path, **kwargs) -> None:
    """Atomic write: temp file in place, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(stream_bytes(**kwargs))
    os.replace(tmp, path)
