"""Reference pools, nearest-fingerprint attribution, and rejection calibration.

Every training document contributes one reference fingerprint; a test
fingerprint is attributed to the author of its single nearest reference
unless that distance exceeds the calibrated threshold, in which case the
document is rejected as coming from an unseen author.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from tracefp import fingerprint_io
from tracefp.labels import REJECT, UNSEEN
from tracefp.evaluation import macro_f1
from tracefp.similarity import METRICS, grid_step

__all__ = [
    "AttributionResult",
    "PoolEntry",
    "ReferencePool",
    "ThresholdConfig",
    "attribute",
    "build_pool",
    "calibrate_threshold",
    "config_hash",
    "load_pool",
    "make_dev_results",
    "save_pool",
    "load_threshold",
    "save_threshold",
]

# Candidate sweep sentinel: one extra candidate below the smallest observed
# distance so "reject everything" is always reachable.
_SWEEP_EPS = 1e-9


def config_hash(fp, evaluator_id: str | None = None) -> str:
    """Digest of the settings that make two fingerprints comparable."""
    evaluator = fp.evaluator_id if evaluator_id is None else evaluator_id
    if fp.variant == "rank":
        key = (
            f"rank|alpha={fp.alpha!r}|clusters={fp.requested_clusters}|order={fp.order}"
            f"|vocab={fp.vocab_size}|evaluator={evaluator}"
        )
    else:
        key = (
            f"entropy|grid={fp.grid_size}|range={fp.range_max!r}|order={fp.order}"
            f"|evaluator={evaluator}"
        )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class PoolEntry:
    fingerprint: object
    author_label: str
    doc_id: str


@dataclass
class ReferencePool:
    entries: list[PoolEntry]
    variant: str
    metric: str
    config: str  # shared config_hash of every entry

    @property
    def authors(self) -> list[str]:
        return sorted({e.author_label for e in self.entries})

    def without_author(self, author: str) -> "ReferencePool":
        kept = [e for e in self.entries if e.author_label != author]
        return ReferencePool(entries=kept, variant=self.variant, metric=self.metric, config=self.config)


@dataclass(frozen=True)
class ThresholdConfig:
    """Reject when best distance is strictly above ``threshold``."""

    metric: str
    variant: str
    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold!r}")


@dataclass(frozen=True)
class AttributionResult:
    doc_id: str
    predicted_label: str  # author label or REJECT
    best_distance: float
    per_author_best: dict[str, float] = field(hash=False)
    threshold_used: float = float("inf")


def build_pool(fingerprints: list[tuple[object, str, str]], metric: str, variant: str) -> ReferencePool:
    """Assemble (fingerprint, author_label, doc_id) triples into a pool.

    One entry per training document; fingerprints of one author are never
    merged or averaged. All entries must share shape and configuration.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if not fingerprints:
        raise ValueError("cannot build a pool from zero fingerprints")
    entries = [PoolEntry(fp, author, doc_id) for fp, author, doc_id in fingerprints]
    first = entries[0].fingerprint
    expected = config_hash(first)
    for e in entries:
        if e.fingerprint.variant != variant:
            raise ValueError(f"pool variant is {variant!r} but {e.doc_id!r} is {e.fingerprint.variant!r}")
        if e.fingerprint.grid.shape != first.grid.shape:
            raise ValueError(
                f"heterogeneous grid shapes in pool: {first.grid.shape} vs "
                f"{e.fingerprint.grid.shape} ({e.doc_id!r})"
            )
        if config_hash(e.fingerprint) != expected:
            raise ValueError(f"fingerprint {e.doc_id!r} was built under a different configuration")
    return ReferencePool(entries=entries, variant=variant, metric=metric, config=expected)


def pool_distances(test_fp, pool: ReferencePool) -> dict[str, float]:
    """Minimum distance from the test fingerprint to each author's references."""
    if test_fp.variant != pool.variant:
        raise ValueError(f"test fingerprint variant {test_fp.variant!r} != pool variant {pool.variant!r}")
    if config_hash(test_fp) != pool.config:
        raise ValueError("test fingerprint configuration does not match the pool")
    metric_fn = METRICS[pool.metric]
    dx = grid_step(test_fp)
    best: dict[str, float] = {}
    for entry in pool.entries:
        d = float(metric_fn(test_fp.grid, entry.fingerprint.grid, dx))
        if d < best.get(entry.author_label, float("inf")):
            best[entry.author_label] = d
    return best


def _nearest(pool: ReferencePool, test_fp) -> tuple[str, str, float]:
    """(author, doc_id, distance) of the nearest entry; deterministic tie-break."""
    metric_fn = METRICS[pool.metric]
    dx = grid_step(test_fp)
    ranked = sorted(
        ((float(metric_fn(test_fp.grid, e.fingerprint.grid, dx)), e.author_label, e.doc_id) for e in pool.entries),
    )
    d, author, doc_id = ranked[0]
    return author, doc_id, d


def attribute(test_fp, pool: ReferencePool, threshold: ThresholdConfig, doc_id: str = "") -> AttributionResult:
    """Nearest-reference attribution with open-set rejection.

    Ties are broken by (distance, author label, reference doc_id) so entry
    order never matters. Equality at the threshold attributes; rejection
    requires the distance to be strictly above it.
    """
    if threshold.metric != pool.metric or threshold.variant != pool.variant:
        raise ValueError(
            f"threshold is for ({threshold.metric}, {threshold.variant}); "
            f"pool is ({pool.metric}, {pool.variant})"
        )
    per_author = pool_distances(test_fp, pool)
    author, _, best = _nearest(pool, test_fp)
    label = author if best <= threshold.threshold else REJECT
    return AttributionResult(
        doc_id=doc_id,
        predicted_label=label,
        best_distance=best,
        per_author_best=per_author,
        threshold_used=threshold.threshold,
    )


def _predict_from_best(per_author_best: dict[str, float]) -> tuple[str, float]:
    best_author = min(per_author_best, key=lambda a: (per_author_best[a], a))
    return best_author, per_author_best[best_author]


def calibrate_threshold(
    dev_results: list[tuple[str, str, dict[str, float]]],
    metric: str,
    variant: str,
) -> ThresholdConfig:
    """Pick the rejection threshold maximizing open-set macro-F1 on dev.

    ``dev_results`` holds (doc_id, gold label or UNSEEN, per-author best
    distances). Candidates are the sorted observed best distances plus a
    sentinel just below the minimum (reject-all); F1 ties break toward the
    larger threshold, favoring attribution. UNSEEN documents count as
    correct exactly when rejected.
    """
    if not dev_results:
        raise ValueError("cannot calibrate on an empty dev set")
    golds = []
    best_pairs = []
    for _, gold, per_author in dev_results:
        if not per_author:
            raise ValueError("dev result with empty per-author distances")
        golds.append(REJECT if gold == UNSEEN else gold)
        best_pairs.append(_predict_from_best(per_author))
    if all(g == REJECT for g in golds):
        raise ValueError("dev set needs at least one known-author document")

    distances = sorted({d for _, d in best_pairs})
    candidates = [distances[0] - _SWEEP_EPS] + distances
    label_set = sorted(set(golds))

    best_t, best_f1 = None, -1.0
    for t in candidates:
        preds = [author if d <= t else REJECT for author, d in best_pairs]
        f1 = macro_f1(golds, preds, label_set)
        if f1 >= best_f1:  # ties go to the larger threshold
            best_t, best_f1 = t, f1
    return ThresholdConfig(metric=metric, variant=variant, threshold=float(best_t))


def make_dev_results(
    dev_fingerprints: list[tuple[object, str, str]],
    pool: ReferencePool,
    synthesize_unseen: bool = True,
) -> list[tuple[str, str, dict[str, float]]]:
    """Dev-set distance table for calibration.

    Each dev document yields a known-author result against the full pool.
    When the dev set has no genuinely unseen authors, unseen examples are
    synthesized leave-one-author-out: the same document scored against the
    pool minus its own author, labeled UNSEEN.
    """
    results = []
    for fp, author, doc_id in dev_fingerprints:
        results.append((doc_id, author, pool_distances(fp, pool)))
        if synthesize_unseen:
            reduced = pool.without_author(author)
            if reduced.entries:
                results.append((f"{doc_id}::unseen", UNSEEN, pool_distances(fp, reduced)))
    return results


# --- persistence ---------------------------------------------------------


def save_pool(pool: ReferencePool, dirpath: str | Path) -> None:
    """Write one fingerprint file per entry plus an index.json."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    index = {"variant": pool.variant, "metric": pool.metric, "config_hash": pool.config, "entries": []}
    for i, entry in enumerate(pool.entries):
        fname = f"ref-{i:05d}.trfp"
        fingerprint_io.write_fingerprint(entry.fingerprint, dirpath / fname)
        index["entries"].append({"file": fname, "author_label": entry.author_label, "doc_id": entry.doc_id})
    (dirpath / "index.json").write_text(json.dumps(index, indent=2), encoding="utf-8")


def load_pool(dirpath: str | Path) -> ReferencePool:
    dirpath = Path(dirpath)
    index = json.loads((dirpath / "index.json").read_text(encoding="utf-8"))
    fingerprints = [
        (fingerprint_io.read_fingerprint(dirpath / e["file"]), e["author_label"], e["doc_id"])
        for e in index["entries"]
    ]
    pool = build_pool(fingerprints, metric=index["metric"], variant=index["variant"])
    if pool.config != index["config_hash"]:
        raise ValueError(f"pool at {dirpath} has config {pool.config}, index says {index['config_hash']}")
    return pool


def save_threshold(cfg: ThresholdConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({"metric": cfg.metric, "variant": cfg.variant, "threshold": cfg.threshold}, indent=2),
        encoding="utf-8",
    )


def load_threshold(path: str | Path) -> ThresholdConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return ThresholdConfig(metric=obj["metric"], variant=obj["variant"], threshold=float(obj["threshold"]))
