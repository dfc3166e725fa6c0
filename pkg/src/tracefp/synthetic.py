"""Synthetic score-stream corpora with author-specific transition structure.

Each synthetic author is a pair of first-order Markov kernels: one over a
handful of entropy levels, one over rank bands. Documents sampled from an
author share its transition statistics, so fingerprints of one author
cluster tightly while different authors stay far apart. Used by the
acceptance suite and the demo experiment script; the real pipeline never
needs this module.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from tracefp.scorestream import ScoreStream

__all__ = ["SyntheticAuthor", "make_author", "make_corpus", "sample_stream"]

DEFAULT_STATES = 8


@dataclass(frozen=True)
class SyntheticAuthor:
    name: str
    family: str
    entropy_kernel: np.ndarray  # (S, S) row-stochastic
    rank_kernel: np.ndarray  # (S, S) row-stochastic
    entropy_levels: np.ndarray  # (S,) values inside (0, ln|V|)
    rank_bands: tuple[tuple[int, int], ...]  # inclusive 1-based rank ranges


def _random_kernel(rng: np.random.Generator, n_states: int) -> np.ndarray:
    # Dirichlet(0.3) rows give spiky, author-specific transition structure.
    return rng.dirichlet(np.full(n_states, 0.3), size=n_states)


def _rank_bands(vocab_size: int, n_states: int) -> tuple[tuple[int, int], ...]:
    """Geometrically growing, disjoint rank bands covering [1, |V|]."""
    edges = np.unique(
        np.round(np.geomspace(1, vocab_size + 1, n_states + 1)).astype(np.int64)
    )
    while len(edges) < n_states + 1:  # tiny vocabularies collapse edges
        missing = n_states + 1 - len(edges)
        extras = np.setdiff1d(np.arange(1, vocab_size + 2), edges)[:missing]
        edges = np.unique(np.concatenate([edges, extras]))
    return tuple((int(edges[i]), int(edges[i + 1] - 1)) for i in range(n_states))


def make_author(
    name: str,
    vocab_size: int,
    seed: int,
    n_states: int = DEFAULT_STATES,
    family: str | None = None,
) -> SyntheticAuthor:
    rng = np.random.default_rng(seed)
    range_max = math.log(vocab_size)
    levels = np.linspace(0.08, 0.92, n_states) * range_max
    return SyntheticAuthor(
        name=name,
        family=family if family is not None else name,
        entropy_kernel=_random_kernel(rng, n_states),
        rank_kernel=_random_kernel(rng, n_states),
        entropy_levels=levels,
        rank_bands=_rank_bands(vocab_size, n_states),
    )


def _sample_chain(kernel: np.ndarray, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Markov chain over the kernel's states via inverse-CDF steps."""
    last = len(kernel) - 1
    cum = [tuple(np.cumsum(row)) for row in kernel]
    uniforms = rng.random(n_steps)
    states = np.empty(n_steps, dtype=np.int64)
    s = int(rng.integers(len(kernel)))
    for t in range(n_steps):
        # min() guards the rare u above a cumsum that rounded below 1.0
        s = min(bisect_left(cum[s], uniforms[t]), last)
        states[t] = s
    return states


def sample_stream(
    author: SyntheticAuthor,
    doc_id: str,
    n_tokens: int,
    vocab_size: int,
    seed: int,
    context_window: int = 1024,
    entropy_jitter: float = 0.1,
) -> ScoreStream:
    rng = np.random.default_rng(seed)
    range_max = math.log(vocab_size)

    e_states = _sample_chain(author.entropy_kernel, n_tokens, rng)
    entropies = author.entropy_levels[e_states] + rng.normal(0.0, entropy_jitter, size=n_tokens)
    entropies = np.clip(entropies, 0.0, np.nextafter(np.float32(range_max), 0.0))

    r_states = _sample_chain(author.rank_kernel, n_tokens, rng)
    lo = np.array([author.rank_bands[s][0] for s in r_states], dtype=np.int64)
    hi = np.array([author.rank_bands[s][1] for s in r_states], dtype=np.int64)
    ranks = rng.integers(lo, hi + 1)

    return ScoreStream(
        doc_id=doc_id,
        evaluator_id="synthetic",
        vocab_size=vocab_size,
        context_window=context_window,
        ranks=ranks,
        entropies=entropies,
    )


def make_corpus(
    n_authors: int,
    docs_per_author: int,
    n_tokens: int,
    vocab_size: int = 50257,
    seed: int = 0,
) -> dict[str, list[ScoreStream]]:
    """Streams keyed by author name; doc ids are '<author>/<index>'."""
    out: dict[str, list[ScoreStream]] = {}
    for a in range(n_authors):
        author = make_author(f"author-{a:02d}", vocab_size, seed=seed * 1000 + a)
        docs = [
            sample_stream(
                author,
                doc_id=f"{author.name}/{d:03d}",
                n_tokens=n_tokens,
                vocab_size=vocab_size,
                seed=seed * 1_000_000 + a * 1000 + d,
            )
            for d in range(docs_per_author)
        ]
        out[author.name] = docs
    return out
