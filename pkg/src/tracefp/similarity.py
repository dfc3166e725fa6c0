"""Distances between fingerprint grids.

All metrics are distances: smaller means more similar. The two primary
metrics are the Jensen-Shannon distance (log base 2, square-rooted) and
the mean angular difference between per-cell surface normals of the grids
viewed as height fields ("norm-mean").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FingerprintDistance",
    "METRICS",
    "cosine_distance",
    "fingerprint_distance",
    "grid_step",
    "js_distance",
    "marginal_emd",
    "norm_mean",
]


@dataclass(frozen=True)
class FingerprintDistance:
    metric: str
    value: float


def _as_distribution(grid: np.ndarray, name: str) -> np.ndarray:
    flat = np.asarray(grid, dtype=np.float64).ravel()
    if np.any(flat < 0):
        raise ValueError(f"{name} has negative entries")
    total = flat.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within 1e-6")
    return flat / total


def js_distance(grid_a: np.ndarray, grid_b: np.ndarray) -> float:
    """sqrt(JS divergence) with log base 2; 0 on equal grids, 1 on disjoint support.

    Cells where the mixture M = (a+b)/2 is zero have a = b = 0 and
    contribute nothing.
    """
    a = np.asarray(grid_a, dtype=np.float64)
    b = np.asarray(grid_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    p = _as_distribution(a, "first grid")
    q = _as_distribution(b, "second grid")
    m = 0.5 * (p + q)
    sup_p = p > 0
    sup_q = q > 0
    kl_pm = np.sum(p[sup_p] * np.log2(p[sup_p] / m[sup_p]))
    kl_qm = np.sum(q[sup_q] * np.log2(q[sup_q] / m[sup_q]))
    js2 = 0.5 * kl_pm + 0.5 * kl_qm
    return min(1.0, math.sqrt(max(0.0, js2)))


def _surface_normals(grid: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Unit normals (-fx, -fy, 1)/|.| from central differences on interior cells."""
    fx = (grid[1:-1, 2:] - grid[1:-1, :-2]) / (2.0 * dx)
    fy = (grid[2:, 1:-1] - grid[:-2, 1:-1]) / (2.0 * dy)
    inv = 1.0 / np.sqrt(fx * fx + fy * fy + 1.0)
    return np.stack([-fx * inv, -fy * inv, inv], axis=-1)


def norm_mean(grid_a: np.ndarray, grid_b: np.ndarray, dx: float = 1.0, dy: float | None = None) -> float:
    """Mean angle (radians) between the two height fields' surface normals.

    Central differences are undefined on the border, so the mean runs over
    interior cells only. Grids are consumed as-is (no renormalization);
    adding the same constant to both leaves the result unchanged.
    """
    a = np.asarray(grid_a, dtype=np.float64)
    b = np.asarray(grid_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"norm-mean requires square grids, got {a.shape}")
    if a.shape[0] < 3:
        raise ValueError(f"norm-mean needs at least a 3x3 grid, got {a.shape}")
    if dy is None:
        dy = dx
    na = _surface_normals(a, dx, dy)
    nb = _surface_normals(b, dx, dy)
    # angle between unit vectors via 2*atan2(|a-b|, |a+b|): same value as
    # arccos(a . b) but exact at 0 and well-conditioned near both ends
    diff = np.linalg.norm(na - nb, axis=-1)
    tot = np.linalg.norm(na + nb, axis=-1)
    return float(np.mean(2.0 * np.arctan2(diff, tot)))


def marginal_emd(grid_a: np.ndarray, grid_b: np.ndarray) -> float:
    """1-D earth-mover distance averaged over the row and column marginals.

    Cheap surrogate for the 2-D transport distance, in grid-index units;
    non-default ablation metric.
    """
    a = np.asarray(grid_a, dtype=np.float64)
    b = np.asarray(grid_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    p = _as_distribution(a, "first grid").reshape(a.shape)
    q = _as_distribution(b, "second grid").reshape(b.shape)
    dists = []
    for axis in (0, 1):
        mp = p.sum(axis=axis)
        mq = q.sum(axis=axis)
        dists.append(np.abs(np.cumsum(mp - mq)).sum())
    return float(np.mean(dists))


def cosine_distance(grid_a: np.ndarray, grid_b: np.ndarray) -> float:
    """1 - cosine similarity of the flattened grids; non-default ablation metric."""
    a = np.asarray(grid_a, dtype=np.float64).ravel()
    b = np.asarray(grid_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance undefined for all-zero grids")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


# Metric registry keyed by CLI name. Each entry takes (grid_a, grid_b, dx).
METRICS = {
    "js": lambda a, b, dx: js_distance(a, b),
    "norm-mean": lambda a, b, dx: norm_mean(a, b, dx=dx),
    "emd": lambda a, b, dx: marginal_emd(a, b),
    "cosine": lambda a, b, dx: cosine_distance(a, b),
}


def grid_step(fingerprint) -> float:
    """Physical cell spacing for a fingerprint: axis range over G-1 for
    entropy grids, 1 (cluster-index units) for rank grids."""
    if getattr(fingerprint, "variant", None) == "entropy":
        return fingerprint.range_max / (fingerprint.grid_size - 1)
    return 1.0


def fingerprint_distance(metric: str, fp_a, fp_b) -> FingerprintDistance:
    """Distance between two fingerprint objects of the same variant/shape."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    if getattr(fp_a, "variant", None) != getattr(fp_b, "variant", None):
        raise ValueError("cannot compare fingerprints of different variants")
    if fp_a.grid.shape != fp_b.grid.shape:
        raise ValueError(f"shape mismatch: {fp_a.grid.shape} vs {fp_b.grid.shape}")
    value = METRICS[metric](fp_a.grid, fp_b.grid, grid_step(fp_a))
    return FingerprintDistance(metric=metric, value=float(value))
