"""Protocol scoring: open-set macro-F1, confusion matrices, aggregation.

Scoring rule (recorded in every report): gold labels of held-out authors
map to the REJECT pseudo-class and a REJECT prediction matches it, so
correct rejection is credited; a rejected known-author document is a false
negative for its gold class and a false positive for nothing. Macro-F1
averages per-class F1 over the gold classes present in the split.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from tracefp.labels import REJECT, UNSEEN

__all__ = [
    "EvaluationReport",
    "PROTOCOLS",
    "SplitScores",
    "confusion_matrix",
    "confusion_to_csv",
    "family_credit_score",
    "macro_f1",
    "normalize_confusion",
    "open_set_macro_f1",
    "read_report",
    "run_protocol",
    "write_report",
]

PROTOCOLS = ("ID", "OOD_DOMAIN", "OOD_AUTHOR")

SCORING_RULE = (
    "macro-F1 over gold classes present in the split; held-out gold labels map to "
    "the REJECT pseudo-class, REJECT predictions match it; a rejected known-author "
    "document is a false negative for its gold class"
)


def macro_f1(golds: Sequence[str], preds: Sequence[str], label_set: Iterable[str]) -> float:
    """Unweighted mean of per-class F1 over label_set.

    Predictions outside label_set (e.g. REJECT in a closed-set split) are
    false negatives for the gold class and false positives for no scored
    class. A class with no true positives scores 0.
    """
    if len(golds) != len(preds):
        raise ValueError(f"golds and preds differ in length: {len(golds)} vs {len(preds)}")
    labels = sorted(set(label_set))
    if not labels:
        raise ValueError("label_set must not be empty")
    scores = []
    for label in labels:
        tp = sum(1 for g, p in zip(golds, preds) if g == label and p == label)
        fp = sum(1 for g, p in zip(golds, preds) if g != label and p == label)
        fn = sum(1 for g, p in zip(golds, preds) if g == label and p != label)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(sum(scores) / len(scores))


def open_set_macro_f1(golds: Sequence[str], preds: Sequence[str], unseen_authors: Iterable[str] = ()) -> float:
    """Macro-F1 after mapping unseen-author golds (or UNSEEN markers) to REJECT."""
    unseen = set(unseen_authors)
    mapped = [REJECT if g in unseen or g == UNSEEN else g for g in golds]
    return macro_f1(mapped, preds, set(mapped))


def confusion_matrix(
    golds: Sequence[str], preds: Sequence[str], label_set: Iterable[str]
) -> tuple[list[str], np.ndarray]:
    """Counts over (labels + REJECT) x (labels + REJECT); rows are gold."""
    if len(golds) != len(preds):
        raise ValueError(f"golds and preds differ in length: {len(golds)} vs {len(preds)}")
    labels = sorted(set(label_set) - {REJECT}) + [REJECT]
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(golds, preds):
        if g not in index:
            raise ValueError(f"gold label {g!r} not in label_set")
        if p not in index:
            raise ValueError(f"predicted label {p!r} not in label_set")
        counts[index[g], index[p]] += 1
    return labels, counts


def normalize_confusion(counts: np.ndarray) -> np.ndarray:
    """Row-normalized counts; all-zero rows stay zero."""
    counts = np.asarray(counts, dtype=np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


def family_credit_score(
    golds_with_family: Sequence[str],
    preds: Sequence[str],
    families: Mapping[str, str],
) -> float:
    """Fraction of held-out docs whose non-rejected prediction names a
    same-family author.

    Rejections are never family-credited; this is the complement scoring
    of the strict rejection rule, applied to the same predictions.
    """
    if len(golds_with_family) != len(preds):
        raise ValueError("golds and preds differ in length")
    if not golds_with_family:
        return 0.0
    credited = 0
    for g, p in zip(golds_with_family, preds):
        if g not in families:
            raise ValueError(f"gold label {g!r} has no family mapping")
        if p == REJECT:
            continue
        if p not in families:
            raise ValueError(f"predicted label {p!r} has no family mapping")
        if families[p] == families[g]:
            credited += 1
    return credited / len(golds_with_family)


@dataclass
class SplitScores:
    """Raw per-split material: gold author labels, predictions, held-out set."""

    golds: list[str]
    preds: list[str]
    held_out: frozenset[str] = frozenset()


@dataclass
class EvaluationReport:
    protocol: str
    per_split_f1: list[float]
    mean_f1: float
    std_f1: float
    confusion_labels: list[str]
    confusion: np.ndarray = field(repr=False)
    family_credit_f1: float | None = None
    metadata: dict = field(default_factory=dict)


def _score_split(scores: SplitScores, protocol: str) -> float:
    if protocol == "OOD_AUTHOR":
        return open_set_macro_f1(scores.golds, scores.preds, scores.held_out)
    return macro_f1(scores.golds, scores.preds, set(scores.golds))


def run_protocol(
    splits: Sequence[SplitScores],
    protocol: str,
    families: Mapping[str, str] | None = None,
    metadata: dict | None = None,
) -> EvaluationReport:
    """Score each split, aggregate mean +/- std, and build one confusion matrix.

    The confusion matrix keeps raw gold author labels (held-out authors
    included) so cross-author confusions stay visible; macro-F1 uses the
    open-set mapping described in the module docstring. The population std
    is reported (ddof=0). Family credit is computed for OOD_AUTHOR when a
    family mapping is given, averaged over splits.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if not splits:
        raise ValueError("no splits to evaluate")
    for s in splits:
        if len(s.golds) != len(s.preds):
            raise ValueError("split with mismatched golds/preds lengths")

    per_split = [_score_split(s, protocol) for s in splits]
    all_labels = sorted(
        ({g for s in splits for g in s.golds} | {p for s in splits for p in s.preds}) - {REJECT}
    )
    all_golds = [g for s in splits for g in s.golds]
    all_preds = [p for s in splits for p in s.preds]
    labels, counts = confusion_matrix(all_golds, all_preds, all_labels)

    family_credit = None
    if protocol == "OOD_AUTHOR" and families is not None:
        per_split_credit = [family_credit_score(s.golds, s.preds, families) for s in splits]
        family_credit = float(np.mean(per_split_credit))

    meta = {"scoring_rule": SCORING_RULE, "n_splits": len(splits)}
    if metadata:
        meta.update(metadata)
    return EvaluationReport(
        protocol=protocol,
        per_split_f1=[float(v) for v in per_split],
        mean_f1=float(np.mean(per_split)),
        std_f1=float(np.std(per_split)),
        confusion_labels=labels,
        confusion=counts,
        family_credit_f1=family_credit,
        metadata=meta,
    )


def write_report(report: EvaluationReport, path: str | Path) -> None:
    obj = {
        "protocol": report.protocol,
        "per_split_f1": report.per_split_f1,
        "mean_f1": report.mean_f1,
        "std_f1": report.std_f1,
        "confusion_labels": report.confusion_labels,
        "confusion": report.confusion.tolist(),
        "family_credit_f1": report.family_credit_f1,
        "metadata": report.metadata,
    }
    Path(path).write_text(json.dumps(obj, indent=2), encoding="utf-8")


def read_report(path: str | Path) -> EvaluationReport:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvaluationReport(
        protocol=obj["protocol"],
        per_split_f1=[float(v) for v in obj["per_split_f1"]],
        mean_f1=float(obj["mean_f1"]),
        std_f1=float(obj["std_f1"]),
        confusion_labels=list(obj["confusion_labels"]),
        confusion=np.asarray(obj["confusion"], dtype=np.int64),
        family_credit_f1=obj.get("family_credit_f1"),
        metadata=obj.get("metadata", {}),
    )


def confusion_to_csv(labels: list[str], counts: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gold\\pred"] + labels)
        for label, row in zip(labels, np.asarray(counts)):
            writer.writerow([label] + [f"{v:g}" for v in row])
