"""Chunked scoring: per-token rank and entropy under an evaluator backend.

The document is processed in consecutive non-overlapping windows of
``context_window`` tokens; the first token of the document and of each
window has no in-window context and is skipped. A sliding mode (``stride``
smaller than the window) scores every token after the first with at least
``context_window - stride`` tokens of context instead, at proportionally
higher cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScorerConfig:
    model: str
    context_window: int = 1024
    device: str | None = None
    batch_size: int = 1
    stride: int | None = None  # None = non-overlapping chunks with initial-token skip

    def __post_init__(self):
        if self.context_window < 2:
            raise ValueError(f"context_window must be >= 2, got {self.context_window}")
        if self.stride is not None and not 1 <= self.stride < self.context_window:
            raise ValueError("stride must be in [1, context_window)")


def ranks_from_logits(logits: np.ndarray, realized: np.ndarray) -> np.ndarray:
    """1-based rank of each realized token, sorting by descending
    probability with ties broken by ascending token id."""
    realized_logit = logits[np.arange(len(realized)), realized]
    greater = (logits > realized_logit[:, None]).sum(axis=1)
    ids = np.arange(logits.shape[1])
    tied_smaller_id = ((logits == realized_logit[:, None]) & (ids[None, :] < realized[:, None])).sum(axis=1)
    return (1 + greater + tied_smaller_id).astype(np.uint32)


def entropies_from_logits(logits: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats of softmax(logits) per row, via a stable
    log-sum-exp; clamped into [0, ln V] against rounding spill."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - m)
    total = z.sum(axis=1, keepdims=True)
    log_z = np.log(total).ravel() + m.ravel()
    expectation = (z / total * logits).sum(axis=1)
    return np.clip(log_z - expectation, 0.0, math.log(logits.shape[1]))


def iter_windows(n_tokens: int, context: int, stride: int | None):
    """Yield (window_start, scored_start, scored_end) absolute index triples."""
    if n_tokens < 2:
        return
    if stride is None:
        for start in range(0, n_tokens, context):
            end = min(start + context, n_tokens)
            if end - start >= 2:
                yield start, start + 1, end
        return
    retain = context - stride
    scored_from = 1
    while scored_from < n_tokens:
        start = max(0, scored_from - retain)
        end = min(start + context, n_tokens)
        yield start, scored_from, end
        scored_from = end


def score_tokens(ids: np.ndarray, backend, config: ScorerConfig):
    """(ranks, entropies) for every scored position of the token sequence.

    Windows are dispatched to the backend in groups of ``batch_size``;
    backends exposing ``next_logits_batch`` (the HF wrapper) stack
    same-length windows into one forward pass.
    """
    windows = list(iter_windows(len(ids), config.context_window, config.stride))
    ranks: list[np.ndarray] = []
    entropies: list[np.ndarray] = []
    batch_fn = getattr(backend, "next_logits_batch", None)
    step = max(1, config.batch_size)
    for group_start in range(0, len(windows), step):
        group = windows[group_start : group_start + step]
        chunks = [ids[start:end] for start, _, end in group]
        if batch_fn is not None and len(chunks) > 1:
            logit_rows = batch_fn(chunks)
        else:
            logit_rows = [backend.next_logits(chunk) for chunk in chunks]
        for (start, scored_from, end), window, logits in zip(group, chunks, logit_rows):
            logits = np.asarray(logits, dtype=np.float64)
            offset = scored_from - (start + 1)  # rows covered by the previous window
            logits = logits[offset:]
            realized = window[1 + offset :]
            ranks.append(ranks_from_logits(logits, realized))
            entropies.append(entropies_from_logits(logits))
    if not ranks:
        return np.zeros(0, dtype=np.uint32), np.zeros(0, dtype=np.float32)
    return np.concatenate(ranks), np.concatenate(entropies).astype(np.float32)


def score_document(text: str, backend, config: ScorerConfig):
    """Tokenize and score a document; returns (ranks, entropies, token_ids)."""
    if not text:
        raise ValueError("cannot score an empty document")
    ids = backend.encode(text)
    ranks, ents = score_tokens(ids, backend, config)
    return ranks, ents, ids
