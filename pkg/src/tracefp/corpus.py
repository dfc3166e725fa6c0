"""Labeled document manifests, text cleaning, and evaluation splits.

A manifest is a single JSON document (or JSON-lines file) listing every
document with its author, model family, genre codes, and split role, plus
the evaluator tokenizer's vocabulary size. Splits are derived from the
manifest: in-distribution by role, out-of-distribution by holding out one
author at a time or by partitioning genres per author.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from tracefp.labels import RESERVED_LABELS

__all__ = [
    "DEFAULT_HEAD_TAIL_TRIM",
    "DEFAULT_MARKERS",
    "DocumentRecord",
    "DatasetManifest",
    "ManifestError",
    "SplitPlan",
    "clean_text",
    "load_manifest",
    "make_author_holdout_splits",
    "make_domain_split",
    "make_id_split",
]

SPLIT_ROLES = ("train", "dev", "test")

# Tokens trimmed from each end of every document before scoring; the unit
# is whitespace-delimited words so trimming is stable across evaluators.
DEFAULT_HEAD_TAIL_TRIM = 1500

# Generation boilerplate deleted during cleaning. Configurable: generators
# differ and this list is only the common default.
DEFAULT_MARKERS = ("END OF NOVEL", "START OF SEGMENT", "<START>", "<END>", "END")

# Common "smart" punctuation mapped to ASCII before non-ASCII stripping.
_SMART_PUNCT = str.maketrans(
    {
        "‘": "'",
        "’": "'",
        "‚": "'",
        "“": '"',
        "”": '"',
        "„": '"',
        "–": "-",
        "—": "-",
        "―": "-",
        "…": "...",
        " ": " ",
    }
)


class ManifestError(ValueError):
    """Manifest failed to parse or validate."""


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    author_label: str
    family_label: str
    genres: frozenset[str]
    split_role: str
    text_path: str


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[DocumentRecord, ...]
    authors: tuple[str, ...]
    vocab_size: int

    def by_author(self, author: str) -> list[DocumentRecord]:
        return [r for r in self.records if r.author_label == author]

    def record(self, doc_id: str) -> DocumentRecord:
        for r in self.records:
            if r.doc_id == doc_id:
                return r
        raise KeyError(doc_id)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/dev/test doc-id sets, with any held-out authors listed."""

    name: str
    train_ids: frozenset[str]
    dev_ids: frozenset[str]
    test_ids: frozenset[str]
    held_out_authors: frozenset[str] = field(default_factory=frozenset)

    def validate(self, manifest: DatasetManifest) -> None:
        if self.train_ids & self.dev_ids or self.train_ids & self.test_ids or self.dev_ids & self.test_ids:
            raise ValueError(f"split {self.name!r}: train/dev/test sets overlap")
        for doc_id in self.train_ids:
            rec = manifest.record(doc_id)
            if rec.author_label in self.held_out_authors:
                raise ValueError(
                    f"split {self.name!r}: train doc {doc_id!r} belongs to held-out author {rec.author_label!r}"
                )


def _parse_record(obj: dict, where: str) -> DocumentRecord:
    for key in ("doc_id", "author_label", "genres", "split_role", "text_path"):
        if key not in obj:
            raise ManifestError(f"{where}: missing field {key!r}")
    doc_id = str(obj["doc_id"])
    author = str(obj["author_label"])
    if not author:
        raise ManifestError(f"{where}: record {doc_id!r} has empty author_label")
    if author in RESERVED_LABELS:
        raise ManifestError(f"{where}: record {doc_id!r} uses reserved author label {author!r}")
    genres = frozenset(str(g) for g in obj["genres"])
    if not genres:
        raise ManifestError(f"{where}: record {doc_id!r} has no genres")
    role = str(obj["split_role"])
    if role not in SPLIT_ROLES:
        raise ManifestError(f"{where}: record {doc_id!r} has unknown split_role {role!r}")
    return DocumentRecord(
        doc_id=doc_id,
        author_label=author,
        family_label=str(obj.get("family_label", author)),
        genres=genres,
        split_role=role,
        text_path=str(obj["text_path"]),
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest file (nested JSON or JSON lines).

    Authors are sorted lexicographically so the label/index mapping is
    deterministic across runs.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    where = str(path)

    vocab_size = None
    raw_records: list[dict] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and "records" in doc:
        vocab_size = doc.get("vocab_size")
        raw_records = list(doc["records"])
    else:
        # JSON lines: one object per line; exactly one carries vocab_size.
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}:{lineno}: not valid JSON: {exc}") from exc
            if "doc_id" in obj:
                raw_records.append(obj)
            elif "vocab_size" in obj:
                vocab_size = obj["vocab_size"]
            else:
                raise ManifestError(f"{where}:{lineno}: object is neither a record nor a vocab_size header")

    if vocab_size is None:
        raise ManifestError(f"{where}: missing top-level vocab_size")
    vocab_size = int(vocab_size)
    if vocab_size < 2:
        raise ManifestError(f"{where}: vocab_size must be >= 2, got {vocab_size}")

    records = [_parse_record(obj, where) for obj in raw_records]
    seen: set[str] = set()
    for rec in records:
        if rec.doc_id in seen:
            raise ManifestError(f"{where}: duplicate doc_id {rec.doc_id!r}")
        seen.add(rec.doc_id)

    authors = tuple(sorted({r.author_label for r in records}))
    return DatasetManifest(records=tuple(records), authors=authors, vocab_size=vocab_size)


def clean_text(
    raw: str,
    head_tail_trim: int = DEFAULT_HEAD_TAIL_TRIM,
    markers: tuple[str, ...] = DEFAULT_MARKERS,
) -> str:
    """Normalize punctuation, strip generation markers, trim both ends.

    Smart punctuation is mapped to ASCII and remaining non-ASCII characters
    are dropped. Markers are removed to a fixpoint; bare-word markers match
    on word boundaries so ordinary words containing them survive. Finally
    the first and last ``head_tail_trim`` whitespace-delimited tokens are
    removed; documents shorter than twice the trim come back empty. Output
    is single-space normalized, which makes the function idempotent.
    """
    if head_tail_trim < 0:
        raise ValueError(f"head_tail_trim must be >= 0, got {head_tail_trim}")
    text = raw.translate(_SMART_PUNCT)
    text = text.encode("ascii", errors="ignore").decode("ascii")
    for marker in sorted(markers, key=len, reverse=True):
        if re.fullmatch(r"\w[\w ]*\w|\w", marker):
            pattern = re.compile(r"\b" + re.escape(marker) + r"\b")
            prev = None
            while prev != text:
                prev = text
                text = pattern.sub(" ", text)
        else:
            while marker in text:
                text = text.replace(marker, " ")
    tokens = text.split()
    if head_tail_trim:
        tokens = tokens[head_tail_trim:-head_tail_trim] if len(tokens) > 2 * head_tail_trim else []
    return " ".join(tokens)


def make_author_holdout_splits(manifest: DatasetManifest) -> list[SplitPlan]:
    """One plan per author: its test docs vs. the other authors' train/dev docs.

    Dev and train docs of the held-out author are excluded entirely so no
    signal from the unseen author leaks into calibration.
    """
    if len(manifest.authors) < 2:
        raise ValueError(f"need at least 2 authors for holdout splits, got {len(manifest.authors)}")
    plans = []
    for author in manifest.authors:
        train = frozenset(
            r.doc_id for r in manifest.records if r.author_label != author and r.split_role == "train"
        )
        dev = frozenset(
            r.doc_id for r in manifest.records if r.author_label != author and r.split_role == "dev"
        )
        test = frozenset(
            r.doc_id for r in manifest.records if r.author_label == author and r.split_role == "test"
        )
        plan = SplitPlan(
            name=f"holdout-{author}",
            train_ids=train,
            dev_ids=dev,
            test_ids=test,
            held_out_authors=frozenset({author}),
        )
        plan.validate(manifest)
        plans.append(plan)
    return plans


def make_id_split(manifest: DatasetManifest) -> SplitPlan:
    """In-distribution plan straight from the manifest roles."""
    by_role = {role: frozenset(r.doc_id for r in manifest.records if r.split_role == role) for role in SPLIT_ROLES}
    plan = SplitPlan(name="id", train_ids=by_role["train"], dev_ids=by_role["dev"], test_ids=by_role["test"])
    plan.validate(manifest)
    return plan


def make_domain_split(manifest: DatasetManifest, ood_genres_per_author: dict[str, set[str]]) -> SplitPlan:
    """Genre-shift plan: per author, docs touching its OOD genres go to test.

    Rejects any author whose train-role docs already carry one of its OOD
    genres, guaranteeing no genre overlap between the partitions. Docs in
    the complement keep their manifest roles; test-role docs with only ID
    genres are left out of the plan.
    """
    ood = {a: {str(g) for g in gs} for a, gs in ood_genres_per_author.items()}
    for author, genres in ood.items():
        for rec in manifest.records:
            if rec.author_label == author and rec.split_role == "train" and rec.genres & genres:
                raise ValueError(
                    f"author {author!r}: train doc {rec.doc_id!r} has genres "
                    f"{sorted(rec.genres & genres)} overlapping its OOD set"
                )
    test, train, dev = set(), set(), set()
    for rec in manifest.records:
        if rec.genres & ood.get(rec.author_label, set()):
            test.add(rec.doc_id)
        elif rec.split_role == "train":
            train.add(rec.doc_id)
        elif rec.split_role == "dev":
            dev.add(rec.doc_id)
    plan = SplitPlan(
        name="ood-domain",
        train_ids=frozenset(train),
        dev_ids=frozenset(dev),
        test_ids=frozenset(test),
    )
    plan.validate(manifest)
    return plan
