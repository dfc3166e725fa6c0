"""The "TRFP" fingerprint container plus CSV and PGM heatmap export.

File layout (little-endian, CRC32 over all preceding bytes at the end):

    magic "TRFP" | version u16 = 1 | variant u16 (1 = rank, 2 = entropy)

    rank variant:
        order u16 | alpha f64 | vocab_size u32 | requested_clusters u32
        | used_clusters u32 | transition_count u64
        | evaluator_id (u16 length-prefixed UTF-8)
        | rows u32 | cols u32 | grid f64 row-major

    entropy variant:
        grid_size u32 | range_max f64 | bandwidth kind u16
        (0 = scott, 1 = fixed, 2 = fixed via scott fallback) | bandwidth h f64
        | point_count u64 | evaluator_id (u16 length-prefixed UTF-8)
        | rows u32 | cols u32 | grid f64 row-major

The evaluator_id field extends the minimal header so pools can verify
configuration compatibility from files alone.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from tracefp import binfmt
from tracefp.entropy_fingerprint import BandwidthRule, EntropyFingerprint
from tracefp.rank_fingerprint import RankFingerprint

MAGIC = b"TRFP"
VERSION = 1
_VARIANT_CODES = {"rank": 1, "entropy": 2}

__all__ = [
    "fingerprint_from_bytes",
    "fingerprint_to_bytes",
    "grid_to_csv",
    "grid_to_pgm",
    "read_fingerprint",
    "write_fingerprint",
]


def fingerprint_to_bytes(fp) -> bytes:
    variant = getattr(fp, "variant", None)
    if variant not in _VARIANT_CODES:
        raise ValueError(f"not a fingerprint object: {fp!r}")
    head = MAGIC + struct.pack("<HH", VERSION, _VARIANT_CODES[variant])
    if variant == "rank":
        head += struct.pack(
            "<HdIIIQ",
            fp.order,
            fp.alpha,
            fp.vocab_size,
            fp.requested_clusters,
            fp.used_clusters,
            fp.transition_count,
        )
    else:
        rule = fp.bandwidth_rule
        kind = 0 if rule.kind == "scott" else (2 if rule.fallback else 1)
        head += struct.pack("<IdHdQ", fp.grid_size, fp.range_max, kind, rule.h, fp.point_count)
    head += binfmt.pack_str(fp.evaluator_id)
    grid = np.ascontiguousarray(fp.grid, dtype="<f8")
    head += struct.pack("<II", grid.shape[0], grid.shape[1])
    return binfmt.append_crc(head + grid.tobytes())


def fingerprint_from_bytes(data: bytes, what: str = "fingerprint"):
    binfmt.check_magic_version(data, MAGIC, VERSION, "fingerprint", what)
    payload = binfmt.split_verify_crc(data, what)
    r = binfmt.Reader(payload, what)
    r.take(4)  # magic, already checked
    r.u16()  # version, already checked
    variant = r.u16()
    if variant == _VARIANT_CODES["rank"]:
        order, alpha, vocab_size, requested, used, transitions = r.unpack("<HdIIIQ")
        evaluator_id = r.string()
        rows, cols = r.unpack("<II")
        grid = np.frombuffer(r.take(rows * cols * 8), dtype="<f8").reshape(rows, cols).copy()
        r.expect_end()
        return RankFingerprint(
            grid=grid,
            transition_count=transitions,
            order=order,
            alpha=alpha,
            vocab_size=vocab_size,
            requested_clusters=requested,
            used_clusters=used,
            evaluator_id=evaluator_id,
        )
    if variant == _VARIANT_CODES["entropy"]:
        grid_size, range_max, kind, h, point_count = r.unpack("<IdHdQ")
        evaluator_id = r.string()
        rows, cols = r.unpack("<II")
        grid = np.frombuffer(r.take(rows * cols * 8), dtype="<f8").reshape(rows, cols).copy()
        r.expect_end()
        if kind == 0:
            rule = BandwidthRule("scott")
        elif kind == 1:
            rule = BandwidthRule("fixed", h)
        elif kind == 2:
            rule = BandwidthRule("fixed", h, fallback=True)
        else:
            raise binfmt.FormatError(f"{what}: unknown bandwidth kind {kind}")
        return EntropyFingerprint(
            grid=grid,
            grid_size=grid_size,
            range_max=range_max,
            bandwidth_rule=rule,
            point_count=point_count,
            evaluator_id=evaluator_id,
        )
    raise binfmt.FormatError(f"{what}: unknown variant code {variant}")


def write_fingerprint(fp, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(fingerprint_to_bytes(fp))
    os.replace(tmp, path)


def read_fingerprint(path: str | Path):
    path = Path(path)
    return fingerprint_from_bytes(path.read_bytes(), what=str(path))


def grid_to_csv(grid: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, np.asarray(grid, dtype=np.float64), delimiter=",", fmt="%.17g")


def grid_to_pgm(grid: np.ndarray, path: str | Path, log_scale: bool = False) -> None:
    """8-bit binary PGM, min-max scaled (after log1p when log_scale).

    Constant grids come out uniformly black: there is no contrast to show.
    """
    values = np.asarray(grid, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("heatmap export needs a 2-D grid")
    if log_scale:
        values = np.log1p(values)
    lo, hi = values.min(), values.max()
    if hi > lo:
        scaled = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros_like(values, dtype=np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + scaled.tobytes())
