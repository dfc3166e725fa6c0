"""Entropy-transition fingerprints: Gaussian KDE of consecutive-entropy pairs.

Consecutive token entropies (e[i-1], e[i]) form a 2D point cloud; a
bivariate Gaussian KDE is evaluated on a G x G grid spanning
[0, ln|V|] per axis and normalized to a discrete distribution.

Grid orientation: ``grid[i, j]`` is the node with previous-entropy value
``nodes[i]`` and next-entropy value ``nodes[j]``, matching the row=from /
column=to convention of the rank grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tracefp.scorestream import ScoreStream

__all__ = [
    "BandwidthRule",
    "EntropyFingerprint",
    "entropy_fingerprint",
    "entropy_pairs",
    "kde_density",
    "kde_grid",
]

# Standard deviation used when the data covariance is unusable, as a
# fraction of the axis range.
FALLBACK_BANDWIDTH_FRACTION = 0.01

# Largest partial exponent allowed on the factored fast path before
# falling back to direct evaluation (exp overflows near 709).
_SAFE_EXPONENT = 600.0


@dataclass(frozen=True)
class BandwidthRule:
    """Kernel bandwidth selection: Scott's rule or a fixed isotropic sigma.

    ``fallback`` marks a fixed rule that was substituted for Scott's rule
    because the data covariance was singular.
    """

    kind: str  # "scott" | "fixed"
    h: float = 0.0
    fallback: bool = False

    def __post_init__(self):
        if self.kind not in ("scott", "fixed"):
            raise ValueError(f"unknown bandwidth rule {self.kind!r}")
        if self.kind == "fixed" and not self.h > 0:
            raise ValueError(f"fixed bandwidth must be positive, got {self.h}")


SCOTT = BandwidthRule("scott")


@dataclass(eq=False)
class EntropyFingerprint:
    """Normalized KDE node values for one document."""

    grid: np.ndarray = field(repr=False)
    grid_size: int
    range_max: float
    bandwidth_rule: BandwidthRule
    point_count: int
    evaluator_id: str = ""

    variant = "entropy"
    order = 2

    def __eq__(self, other) -> bool:
        if not isinstance(other, EntropyFingerprint):
            return NotImplemented
        return (
            self.grid_size == other.grid_size
            and self.range_max == other.range_max
            and self.bandwidth_rule == other.bandwidth_rule
            and self.point_count == other.point_count
            and self.evaluator_id == other.evaluator_id
            and np.array_equal(self.grid, other.grid)
        )


def entropy_pairs(entropies: np.ndarray) -> np.ndarray:
    """The m-1 consecutive pairs (e[i-1], e[i]) as an (m-1, 2) array, in order."""
    e = np.asarray(entropies, dtype=np.float64)
    if e.ndim != 1:
        raise ValueError("entropies must be a 1-D sequence")
    if len(e) < 2:
        raise ValueError(f"need at least 2 entropy values to form pairs, got {len(e)}")
    return np.column_stack([e[:-1], e[1:]])


def _covariance2(points: np.ndarray) -> np.ndarray | None:
    """Unbiased 2x2 sample covariance, or None when unusable.

    Identical or (nearly) collinear point clouds give a singular matrix;
    the determinant is compared against the diagonal product so rounding
    noise around an exact zero cannot smuggle in a razor-thin kernel.
    """
    n = len(points)
    if n < 2:
        return None
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if not np.all(np.isfinite(cov)) or det <= 1e-12 * cov[0, 0] * cov[1, 1]:
        return None
    return cov


def _resolve_bandwidth(points: np.ndarray, range_max: float, rule: BandwidthRule):
    """Return (2x2 kernel covariance H, rule actually used)."""
    if rule.kind == "fixed":
        return np.diag([rule.h**2, rule.h**2]), rule
    cov = _covariance2(points)
    if cov is None:
        h = FALLBACK_BANDWIDTH_FRACTION * range_max
        return np.diag([h**2, h**2]), BandwidthRule("fixed", h, fallback=True)
    # Scott's rule for d=2: kernel cov = data cov * n^(-2/(d+4)) = cov * n^(-1/3).
    n = len(points)
    return cov * n ** (-1.0 / 3.0), rule


def _mixture_direct(px, py, gx, gy, m):
    """Chunked direct evaluation: one exp per (node, point), exponent <= 0."""
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    gxf = gx[None, :, None]  # (1, G, 1) x-axis varies along columns
    gyf = gy[:, None, None]  # (G, 1, 1) y-axis varies along rows
    out = np.zeros((len(gy), len(gx)))
    chunk = max(1, int(4_000_000 // (len(gx) * len(gy))))
    for start in range(0, len(px), chunk):
        dx = gxf - px[None, None, start : start + chunk]
        dy = gyf - py[None, None, start : start + chunk]
        expo = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
        out += np.exp(expo).sum(axis=2)
    return out


def _mixture_factored(px, py, u, v, w_log, gx, gy, m):
    """Separable evaluation: O(n) exps plus one (G,n)x(n,G) matmul.

    Algebraically identical to the direct form: the exponent
    -(g-p)' M (g-p)/2 splits into a node-only term, a point-only term, and
    the bilinear terms gx*u + gy*v with (u, v) = M p. The point weight is
    divided evenly between the two bilinear factors to keep each bounded.
    Along the evenly spaced grid, exp(gx[i] * u) is a geometric progression
    per point, so each factor costs 2 exps per point plus G-1 row multiplies.
    """
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    half_log = 0.5 * w_log

    def rows(nodes, slope):
        g0, step = nodes[0], nodes[1] - nodes[0]
        out = np.empty((len(nodes), len(slope)))
        out[0] = np.exp(g0 * slope + half_log)
        ratio = np.exp(step * slope)
        for i in range(1, len(nodes)):
            np.multiply(out[i - 1], ratio, out=out[i])
        return out

    ex = rows(gx, u)  # (G, n)
    ey = rows(gy, v)  # (G, n)
    cross = ey @ ex.T  # (G, G): rows = y nodes, cols = x nodes
    node_expo = -0.5 * (
        a * gx[None, :] ** 2 + c * gy[:, None] ** 2 + 2.0 * b * gy[:, None] * gx[None, :]
    )
    return np.exp(node_expo) * cross


def kde_density(
    points: np.ndarray,
    grid_size: int,
    range_max: float,
    bandwidth_rule: BandwidthRule = SCOTT,
):
    """Evaluate the Gaussian mixture density (1/n) sum_j N(x; p_j, H) on the grid.

    Returns (density grid, rule used). density[i, j] is the value at
    node (x=nodes[j], y=nodes[i]) with nodes = linspace(0, range_max, G),
    i.e. rows index the first pair coordinate.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if len(points) < 1:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    if not range_max > 0:
        raise ValueError(f"range_max must be positive, got {range_max}")

    h_mat, used_rule = _resolve_bandwidth(points, range_max, bandwidth_rule)
    det = h_mat[0, 0] * h_mat[1, 1] - h_mat[0, 1] * h_mat[1, 0]
    m = np.array([[h_mat[1, 1], -h_mat[0, 1]], [-h_mat[1, 0], h_mat[0, 0]]]) / det

    nodes = np.linspace(0.0, range_max, grid_size)
    # Center coordinates to shrink the factored-path exponents; the density
    # depends only on node-minus-point differences, so this is exact.
    shift = 0.5 * range_max
    gx = nodes - shift
    gy = nodes - shift
    px = points[:, 0] - shift
    py = points[:, 1] - shift

    u = m[0, 0] * px + m[0, 1] * py
    v = m[1, 0] * px + m[1, 1] * py
    w_log = -0.5 * (px * u + py * v)  # per-point exponent, always <= 0

    # The factored path is safe when (a) no single factor overflows and
    # (b) no factor product can: the product exponent is bounded by the
    # node-only quadratic, whose maximum sits at a grid corner.
    gmax = np.abs(gx).max()
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    quad_max = 0.5 * gmax * gmax * (a + c + 2.0 * abs(b))
    safe = (
        quad_max + math.log(len(points)) < _SAFE_EXPONENT
        and gmax * np.abs(u).max() < _SAFE_EXPONENT
        and gmax * np.abs(v).max() < _SAFE_EXPONENT
    )
    if safe:
        mixture = _mixture_factored(px, py, u, v, w_log, gx, gy, m)
    else:
        mixture = _mixture_direct(px, py, gx, gy, m)

    norm = 1.0 / (len(points) * 2.0 * math.pi * math.sqrt(det))
    # Orient rows along the first pair coordinate: density[i, j] = f(nodes[i], nodes[j]).
    return (norm * mixture).T, used_rule


def kde_grid(
    points: np.ndarray,
    grid_size: int,
    range_max: float,
    bandwidth_rule: BandwidthRule = SCOTT,
    evaluator_id: str = "",
) -> EntropyFingerprint:
    """KDE node values normalized to sum to 1."""
    density, used_rule = kde_density(points, grid_size, range_max, bandwidth_rule)
    total = density.sum()
    if not total > 0:
        raise ValueError("density vanished on the whole grid; bandwidth too small for this range")
    return EntropyFingerprint(
        grid=density / total,
        grid_size=grid_size,
        range_max=range_max,
        bandwidth_rule=used_rule,
        point_count=len(points),
        evaluator_id=evaluator_id,
    )


def entropy_fingerprint(
    stream: ScoreStream,
    grid_size: int = 50,
    bandwidth_rule: BandwidthRule = SCOTT,
) -> EntropyFingerprint:
    """Fingerprint a stream: pair consecutive entropies, then KDE on [0, ln|V|]^2.

    Entropies are clamped into [0, ln|V|] first; float32 storage can
    overshoot the bound by rounding slack.
    """
    if len(stream) < 2:
        raise ValueError(f"stream {stream.doc_id!r} has {len(stream)} tokens; need >= 2 for pairs")
    range_max = math.log(stream.vocab_size)
    ents = np.clip(stream.entropies.astype(np.float64), 0.0, range_max)
    pairs = entropy_pairs(ents)
    return kde_grid(
        pairs,
        grid_size=grid_size,
        range_max=range_max,
        bandwidth_rule=bandwidth_rule,
        evaluator_id=stream.evaluator_id,
    )
