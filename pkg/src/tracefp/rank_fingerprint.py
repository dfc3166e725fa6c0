"""Rank-transition fingerprints over equal-probability power-law clusters.

Ranks 1..|V| are compressed into clusters so that each cluster holds
roughly 1/C of the mass of a Zipf-like distribution p(i) = i^-alpha / Z.
The fingerprint is the normalized matrix of consecutive cluster-pair
counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClusterMap",
    "RankFingerprint",
    "SequenceTooShortError",
    "build_cluster_map",
    "power_law_pmf",
    "rank_fingerprint",
    "rank_transition_counts",
]


class SequenceTooShortError(ValueError):
    """Fewer tokens than the transition order requires."""


@dataclass(eq=False)
class ClusterMap:
    """1-based rank -> cluster assignment; ``assignment[i-1]`` is rank i's cluster."""

    vocab_size: int
    alpha: float
    requested_clusters: int
    assignment: np.ndarray = field(repr=False)
    used_clusters: int

    def clusters_of(self, ranks: np.ndarray) -> np.ndarray:
        """Map an array of 1-based ranks to their 1-based cluster indices."""
        ranks = np.asarray(ranks, dtype=np.int64)
        if ranks.size and (ranks.min() < 1 or ranks.max() > self.vocab_size):
            raise ValueError(f"ranks outside [1, {self.vocab_size}]")
        return self.assignment[ranks - 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClusterMap):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and self.alpha == other.alpha
            and self.requested_clusters == other.requested_clusters
            and self.used_clusters == other.used_clusters
            and np.array_equal(self.assignment, other.assignment)
        )


@dataclass(eq=False)
class RankFingerprint:
    """Normalized cluster-transition grid for one document.

    For order 2 the grid is K x K; for order 3 it is (K^2) x K with row
    index cluster(r[i-2]) * K + cluster(r[i-1]) in 0-based cluster units.
    """

    grid: np.ndarray = field(repr=False)
    transition_count: int
    order: int
    alpha: float
    vocab_size: int
    requested_clusters: int
    used_clusters: int
    evaluator_id: str = ""

    variant = "rank"

    def __eq__(self, other) -> bool:
        if not isinstance(other, RankFingerprint):
            return NotImplemented
        return (
            self.transition_count == other.transition_count
            and self.order == other.order
            and self.alpha == other.alpha
            and self.vocab_size == other.vocab_size
            and self.requested_clusters == other.requested_clusters
            and self.used_clusters == other.used_clusters
            and self.evaluator_id == other.evaluator_id
            and np.array_equal(self.grid, other.grid)
        )


def power_law_pmf(vocab_size: int, alpha: float) -> list[float]:
    """Exact normalized power-law mass p(i) = i^-alpha / sum_j j^-alpha.

    Weights are i ** -alpha in IEEE double arithmetic and the normalizer is
    math.fsum over them (exactly rounded), so any conforming
    reimplementation produces bit-identical probabilities.
    """
    weights = [float(i) ** -alpha for i in range(1, vocab_size + 1)]
    total = math.fsum(weights)
    return [w / total for w in weights]


def sampled_power_law_pmf(vocab_size: int, alpha: float, n_samples: int, seed: int) -> list[float]:
    """Monte-Carlo estimate of the power-law mass from n_samples draws.

    Fidelity mode only; the analytic form is the default everywhere.
    """
    exact = np.asarray(power_law_pmf(vocab_size, alpha))
    rng = np.random.default_rng(seed)
    draws = rng.choice(vocab_size, size=n_samples, p=exact / exact.sum())
    counts = np.bincount(draws, minlength=vocab_size)
    return list(counts / n_samples)


def build_cluster_map(
    vocab_size: int,
    alpha: float,
    requested_clusters: int,
    *,
    pmf: list[float] | None = None,
) -> ClusterMap:
    """Assign each rank to a cluster by accumulating mass in steps of 1/C.

    Walks ranks in order, tagging each with the current cluster counter and
    advancing the counter every time the running mass crosses a 1/C
    boundary. When p(1) alone exceeds several boundaries the intervening
    cluster indices stay empty; the grid dimension still counts them.
    Pass ``pmf`` (e.g. from sampled_power_law_pmf) to override the analytic
    mass estimate.
    """
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    # alpha = 0 is the uniform degenerate case; negative exponents are not power laws.
    if not math.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be a finite value >= 0, got {alpha}")
    if not 1 <= requested_clusters <= vocab_size:
        raise ValueError(f"requested_clusters must be in [1, {vocab_size}], got {requested_clusters}")

    p = power_law_pmf(vocab_size, alpha) if pmf is None else list(pmf)
    if len(p) != vocab_size:
        raise ValueError("pmf length must equal vocab_size")

    assignment = np.empty(vocab_size, dtype=np.int32)
    cum = 0.0
    k = 1
    delta = 1.0 / requested_clusters
    for i in range(vocab_size):
        assignment[i] = k
        cum += p[i]
        while cum >= delta:
            cum -= delta
            k += 1
    return ClusterMap(
        vocab_size=vocab_size,
        alpha=alpha,
        requested_clusters=requested_clusters,
        assignment=assignment,
        used_clusters=k,
    )


def rank_transition_counts(ranks: np.ndarray, cmap: ClusterMap, order: int = 2) -> np.ndarray:
    """Integer grid of consecutive cluster tuples; rows sum to m - (order-1)."""
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order}")
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.ndim != 1:
        raise ValueError("ranks must be a 1-D sequence")
    if len(ranks) < order:
        raise SequenceTooShortError(f"need at least {order} ranks for order {order}, got {len(ranks)}")
    clusters = cmap.clusters_of(ranks) - 1  # 0-based
    k = cmap.used_clusters
    if order == 2:
        idx = clusters[:-1] * k + clusters[1:]
        counts = np.bincount(idx, minlength=k * k)
        return counts.reshape(k, k)
    rows = clusters[:-2] * k + clusters[1:-1]
    idx = rows * k + clusters[2:]
    counts = np.bincount(idx, minlength=k * k * k)
    return counts.reshape(k * k, k)


def rank_fingerprint(
    ranks: np.ndarray,
    cmap: ClusterMap,
    order: int = 2,
    evaluator_id: str = "",
) -> RankFingerprint:
    """Count consecutive cluster transitions and normalize to a distribution."""
    counts = rank_transition_counts(ranks, cmap, order)
    total = int(counts.sum())
    grid = counts.astype(np.float64) / total
    return RankFingerprint(
        grid=grid,
        transition_count=total,
        order=order,
        alpha=cmap.alpha,
        vocab_size=cmap.vocab_size,
        requested_clusters=cmap.requested_clusters,
        used_clusters=cmap.used_clusters,
        evaluator_id=evaluator_id,
    )
