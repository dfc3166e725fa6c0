"""Metric-based attribution baselines: mean rank, mean entropy, GLTR buckets.

Each baseline reduces a score stream to a tiny feature vector and feeds a
multinomial logistic-regression classifier with a max-probability rejection
threshold. Training is full-batch gradient descent from zero weights, so
results are exactly reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tracefp.labels import REJECT
from tracefp.scorestream import ScoreStream

__all__ = [
    "FeatureVector",
    "GLTR_BUCKET_BOUNDS",
    "LinearClassifier",
    "classify",
    "cross_entropy_loss",
    "cross_entropy_grad",
    "gltr_features",
    "load_classifier",
    "mean_entropy",
    "mean_rank",
    "save_classifier",
    "stream_features",
    "train_classifier",
]

FEATURE_DIMS = {"mean_rank": 1, "mean_entropy": 1, "gltr": 4}

# Canonical GLTR rank-range boundaries; the buckets are
# [1, 10], [11, 100], [101, 1000], [1001, |V|].
GLTR_BUCKET_BOUNDS = (10, 100, 1000)


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    feature_set: str

    def __post_init__(self):
        if self.feature_set not in FEATURE_DIMS:
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        if len(self.values) != FEATURE_DIMS[self.feature_set]:
            raise ValueError(
                f"{self.feature_set} expects {FEATURE_DIMS[self.feature_set]} values, got {len(self.values)}"
            )


def gltr_features(ranks, bounds: tuple[int, ...] = GLTR_BUCKET_BOUNDS) -> FeatureVector:
    """Proportions of ranks in the four GLTR buckets; always sums to 1."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("cannot compute GLTR features of an empty rank sequence")
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based; found a value below 1")
    if len(bounds) != 3:
        raise ValueError("GLTR needs exactly 3 inner bucket boundaries")
    # Half-open histogram edges so bucket k covers (bounds[k-1], bounds[k]].
    edges = np.array([1, *(b + 1 for b in bounds), np.iinfo(np.int64).max], dtype=np.int64)
    counts = np.histogram(ranks, bins=edges)[0]
    return FeatureVector(values=tuple(counts / ranks.size), feature_set="gltr")


def mean_rank(stream: ScoreStream) -> float:
    if len(stream) == 0:
        raise ValueError(f"stream {stream.doc_id!r} is empty")
    return float(np.mean(stream.ranks.astype(np.float64)))


def mean_entropy(stream: ScoreStream) -> float:
    if len(stream) == 0:
        raise ValueError(f"stream {stream.doc_id!r} is empty")
    return float(np.mean(stream.entropies.astype(np.float64)))


def stream_features(stream: ScoreStream, feature_set: str) -> FeatureVector:
    if feature_set == "mean_rank":
        return FeatureVector((mean_rank(stream),), "mean_rank")
    if feature_set == "mean_entropy":
        return FeatureVector((mean_entropy(stream),), "mean_entropy")
    if feature_set == "gltr":
        return gltr_features(stream.ranks)
    raise ValueError(f"unknown feature set {feature_set!r}")


@dataclass(eq=False)
class LinearClassifier:
    """Multinomial logistic regression with per-dimension standardization."""

    weights: np.ndarray = field(repr=False)  # (classes, dim + 1), last column is bias
    class_labels: tuple[str, ...]
    feature_mean: np.ndarray = field(repr=False)
    feature_std: np.ndarray = field(repr=False)
    feature_set: str = ""

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.weights.shape[1] - 1:
            raise ValueError(f"feature dimension {x.shape[1]} != classifier dimension {self.weights.shape[1] - 1}")
        z = (x - self.feature_mean) / self.feature_std
        logits = z @ self.weights[:, :-1].T + self.weights[:, -1]
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def cross_entropy_loss(weights: np.ndarray, x_aug: np.ndarray, y_hot: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus l2 * sum of squared non-bias weights."""
    logits = x_aug @ weights.T
    logits -= logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1))
    nll = log_z - (logits * y_hot).sum(axis=1)
    return float(nll.mean() + l2 * np.sum(weights[:, :-1] ** 2))


def cross_entropy_grad(weights: np.ndarray, x_aug: np.ndarray, y_hot: np.ndarray, l2: float) -> np.ndarray:
    logits = x_aug @ weights.T
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    grad = (probs - y_hot).T @ x_aug / len(x_aug)
    reg = 2.0 * l2 * weights
    reg[:, -1] = 0.0  # bias is unpenalized
    return grad + reg


def train_classifier(
    features: list[tuple[FeatureVector, str]],
    l2: float = 0.0,
    epochs: int = 5000,
    tolerance: float = 1e-8,
    learning_rate: float = 0.2,
) -> LinearClassifier:
    """Deterministic full-batch gradient descent from zero initialization.

    Features are z-scored with training-set statistics (stored in the
    classifier); training stops at the gradient-norm tolerance or the
    epoch cap, whichever comes first.
    """
    if not features:
        raise ValueError("no training samples")
    feature_set = features[0][0].feature_set
    if any(fv.feature_set != feature_set for fv, _ in features):
        raise ValueError("mixed feature sets in training data")
    labels = sorted({label for _, label in features})
    if len(labels) < 2:
        raise ValueError(f"need at least 2 classes, got {labels}")
    index = {label: i for i, label in enumerate(labels)}

    x = np.array([fv.values for fv, _ in features], dtype=np.float64)
    y = np.array([index[label] for _, label in features])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    x_aug = np.column_stack([(x - mean) / std, np.ones(len(x))])
    y_hot = _one_hot(y, len(labels))

    weights = np.zeros((len(labels), x_aug.shape[1]))
    for _ in range(epochs):
        grad = cross_entropy_grad(weights, x_aug, y_hot, l2)
        if np.linalg.norm(grad) <= tolerance:
            break
        weights -= learning_rate * grad
    return LinearClassifier(
        weights=weights,
        class_labels=tuple(labels),
        feature_mean=mean,
        feature_std=std,
        feature_set=feature_set,
    )


def classify(clf: LinearClassifier, feature: FeatureVector, threshold: float) -> str:
    """Argmax class when its probability clears the threshold, else REJECT.

    Probability ties resolve to the lexicographically smallest label
    (class_labels are sorted, argmax takes the first maximum).
    """
    if feature.feature_set != clf.feature_set:
        raise ValueError(f"classifier expects {clf.feature_set!r} features, got {feature.feature_set!r}")
    probs = clf.predict_proba(np.array([feature.values]))[0]
    top = int(np.argmax(probs))
    return clf.class_labels[top] if probs[top] >= threshold else REJECT


def save_classifier(clf: LinearClassifier, path: str | Path) -> None:
    obj = {
        "feature_set": clf.feature_set,
        "class_labels": list(clf.class_labels),
        "weights": clf.weights.tolist(),
        "feature_mean": clf.feature_mean.tolist(),
        "feature_std": clf.feature_std.tolist(),
    }
    Path(path).write_text(json.dumps(obj, indent=2), encoding="utf-8")


def load_classifier(path: str | Path) -> LinearClassifier:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return LinearClassifier(
        weights=np.asarray(obj["weights"], dtype=np.float64),
        class_labels=tuple(obj["class_labels"]),
        feature_mean=np.asarray(obj["feature_mean"], dtype=np.float64),
        feature_std=np.asarray(obj["feature_std"], dtype=np.float64),
        feature_set=obj["feature_set"],
    )
