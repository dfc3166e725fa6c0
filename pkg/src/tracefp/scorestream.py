"""Per-token score streams and their ".trsc" binary container.

A score stream decouples fingerprinting from any particular evaluator
language model: it holds, for one document, the 1-based rank and the
entropy (nats) of every scored token. Entropies are stored as float32 so
that the in-memory values and the on-disk records are bit-identical.

File layout (".trsc", little-endian):
    magic "TRSC" | version u16 = 1 | reserved u16 = 0
    vocab_size u32 | context_window u32 | token_count u64
    evaluator_id (u16 length-prefixed UTF-8) | doc_id (same)
    token_count x (rank u32, entropy f32)
    CRC32 u32 over all preceding bytes
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tracefp import binfmt

MAGIC = b"TRSC"
VERSION = 1

# Absolute slack on the entropy upper bound; float32 rounding of a value at
# ln|V| can exceed the float64 bound by up to ~1e-6 for realistic vocabularies.
ENTROPY_TOL = 1e-6

_RECORD_DTYPE = np.dtype([("rank", "<u4"), ("entropy", "<f4")])


@dataclass(eq=False)
class ScoreStream:
    """Ranks and entropies for one document under one evaluator model."""

    doc_id: str
    evaluator_id: str
    vocab_size: int
    context_window: int
    ranks: np.ndarray = field(repr=False)
    entropies: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.ranks = np.ascontiguousarray(self.ranks, dtype=np.uint32)
        self.entropies = np.ascontiguousarray(self.entropies, dtype=np.float32)

    def __len__(self) -> int:
        return len(self.ranks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreStream):
            return NotImplemented
        return (
            self.doc_id == other.doc_id
            and self.evaluator_id == other.evaluator_id
            and self.vocab_size == other.vocab_size
            and self.context_window == other.context_window
            and np.array_equal(self.ranks, other.ranks)
            and np.array_equal(self.entropies, other.entropies)
        )


@dataclass(frozen=True)
class StreamViolation:
    """One invariant violation; index is None for structural problems."""

    index: int | None
    message: str


def validate_stream(s: ScoreStream) -> list[StreamViolation]:
    """Check every stream invariant; an empty list means the stream is valid."""
    issues: list[StreamViolation] = []
    if s.vocab_size < 2:
        issues.append(StreamViolation(None, f"vocab_size must be >= 2, got {s.vocab_size}"))
        return issues
    if s.context_window < 1:
        issues.append(StreamViolation(None, f"context_window must be >= 1, got {s.context_window}"))
    if len(s.ranks) != len(s.entropies):
        issues.append(
            StreamViolation(None, f"rank/entropy length mismatch: {len(s.ranks)} vs {len(s.entropies)}")
        )
        return issues
    bound = math.log(s.vocab_size)
    ranks = s.ranks
    ents = s.entropies.astype(np.float64)
    for i in np.nonzero((ranks < 1) | (ranks > s.vocab_size))[0]:
        issues.append(StreamViolation(int(i), f"rank {int(ranks[i])} outside [1, {s.vocab_size}]"))
    for i in np.nonzero(~np.isfinite(ents) | (ents < 0.0) | (ents > bound + ENTROPY_TOL))[0]:
        issues.append(StreamViolation(int(i), f"entropy {float(ents[i])!r} outside [0, ln|V|={bound:.6f}]"))
    return issues


def truncate_stream(s: ScoreStream, max_tokens: int) -> ScoreStream:
    """Keep the first min(len, max_tokens) tokens; metadata is unchanged."""
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    if max_tokens >= len(s):
        return s
    return ScoreStream(
        doc_id=s.doc_id,
        evaluator_id=s.evaluator_id,
        vocab_size=s.vocab_size,
        context_window=s.context_window,
        ranks=s.ranks[:max_tokens].copy(),
        entropies=s.entropies[:max_tokens].copy(),
    )


def stream_to_bytes(s: ScoreStream) -> bytes:
    issues = validate_stream(s)
    if issues:
        raise ValueError(f"refusing to serialize invalid stream: {issues[:3]}")
    head = MAGIC + struct.pack("<HH", VERSION, 0)
    head += struct.pack("<IIQ", s.vocab_size, s.context_window, len(s))
    head += binfmt.pack_str(s.evaluator_id) + binfmt.pack_str(s.doc_id)
    records = np.empty(len(s), dtype=_RECORD_DTYPE)
    records["rank"] = s.ranks
    records["entropy"] = s.entropies
    return binfmt.append_crc(head + records.tobytes())


def stream_from_bytes(data: bytes, what: str = "stream") -> ScoreStream:
    binfmt.check_magic_version(data, MAGIC, VERSION, "score stream", what)
    payload = binfmt.split_verify_crc(data, what)
    r = binfmt.Reader(payload, what)
    r.take(4)  # magic, already checked
    r.u16()  # version, already checked
    r.u16()  # reserved
    vocab_size, context_window = r.u32(), r.u32()
    count = r.u64()
    evaluator_id = r.string()
    doc_id = r.string()
    raw = r.take(count * _RECORD_DTYPE.itemsize)
    r.expect_end()
    records = np.frombuffer(raw, dtype=_RECORD_DTYPE)
    return ScoreStream(
        doc_id=doc_id,
        evaluator_id=evaluator_id,
        vocab_size=vocab_size,
        context_window=context_window,
        ranks=records["rank"].copy(),
        entropies=records["entropy"].copy(),
    )


def write_stream(s: ScoreStream, path: str | Path) -> None:
    """Serialize atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(stream_to_bytes(s))
    os.replace(tmp, path)


def read_stream(path: str | Path) -> ScoreStream:
    path = Path(path)
    return stream_from_bytes(path.read_bytes(), what=str(path))
