"""Agglomerative clustering for market segmentation.

Bottom-up merging over a dense distance matrix: every row starts as its own
cluster and the closest pair merges until one remains. Supported metrics are
plain and standardized (per-column z-scored) euclidean distance; linkages are
single, complete, and average, all updated via the Lance-Williams recurrences,
so merge heights never decrease. Node ids follow the usual convention: leaves
are 0..n-1 and the i-th merge creates node n+i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

METRICS = ("euclidean", "standardized-euclidean")
LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: tuple[tuple[int, int, float, int], ...]  # (node_a, node_b, height, merged size)

    def heights(self) -> np.ndarray:
        return np.array([m[2] for m in self.merges])


@dataclass(frozen=True)
class SegmentRule:
    """How clusters become named market segments.

    Clusters whose median price exceeds ``outlier_cutoff`` are dropped. The
    rest are ordered by ascending median (ties by cluster label) and named
    positionally from ``labels``; extra clusters share the last label. When
    ``quantile_thresholds`` is set, each cluster is instead named by where its
    median falls among those price quantiles of the kept rows, which lets
    several clusters share one segment.
    """

    labels: tuple[str, ...] = ("base", "luxury")
    outlier_cutoff: float = 250_000.0
    quantile_thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.labels:
            raise ValidationError("need at least one segment label")
        if self.outlier_cutoff <= 0:
            raise ValidationError("outlier_cutoff must be positive")
        if self.quantile_thresholds is not None:
            qs = self.quantile_thresholds
            if len(qs) != len(self.labels) - 1:
                raise ValidationError("need exactly len(labels) - 1 quantile thresholds")
            if any(not 0 < q < 1 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
                raise ValidationError("quantile thresholds must be strictly increasing inside (0, 1)")


@dataclass(frozen=True)
class SegmentAssignment:
    segments: tuple[str | None, ...]  # per row; None when the row's cluster was dropped
    segment_of_cluster: dict[int, str]
    dropped_clusters: tuple[int, ...]
    cluster_medians: dict[int, float]


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValidationError("points must form a non-empty 2-D matrix")
    if np.isnan(X).any():
        raise ValidationError("points contain missing values")
    return X


def agglomerate(points, metric: str = "standardized-euclidean", linkage: str = "average") -> Dendrogram:
    """Build the full merge tree; O(n^2) memory and O(n^3) time."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if linkage not in LINKAGES:
        raise ValidationError(f"unknown linkage {linkage!r}; expected one of {LINKAGES}")
    X = _as_points(points)
    n = X.shape[0]
    if n < 2:
        raise ValidationError("need at least two points to agglomerate")
    if metric == "standardized-euclidean":
        sd = X.std(axis=0)
        X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)

    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)

    node_id = np.arange(n)
    sizes = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    merges: list[tuple[int, int, float, int]] = []

    for step in range(n - 1):
        d_min = dist[np.ix_(active, active)].min()
        ii, jj = np.nonzero((dist == d_min) & active[:, None] & active[None, :])
        # pick the candidate pair with the lowest node ids (merge order is part of the contract)
        pairs = sorted(
            (tuple(sorted((int(node_id[a]), int(node_id[b])))), int(a), int(b))
            for a, b in zip(ii, jj)
            if a < b
        )
        (id_a, id_b), i, j = pairs[0][0], pairs[0][1], pairs[0][2]

        if linkage == "single":
            row = np.minimum(dist[i], dist[j])
        elif linkage == "complete":
            row = np.maximum(dist[i], dist[j])
        else:
            row = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
        dist[i, :] = row
        dist[:, i] = row
        dist[i, i] = np.inf
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        node_id[i] = n + step
        merges.append((id_a, id_b, float(d_min), int(sizes[i])))

    return Dendrogram(n_leaves=n, merges=tuple(merges))


def cut(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Labels in 0..k-1 after undoing the last k-1 merges; label order follows
    each cluster's first row."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValidationError(f"k must be between 1 and {n}")
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for step, (a, b, _h, _s) in enumerate(dendrogram.merges[: n - k]):
        members[n + step] = members.pop(a) + members.pop(b)
    groups = sorted(members.values(), key=min)
    labels = np.empty(n, dtype=np.int64)
    for g, rows in enumerate(groups):
        labels[rows] = g
    return labels


def assign_segments(labels: Sequence[int], prices: Sequence[float], rule: SegmentRule = SegmentRule()) -> SegmentAssignment:
    """Name clusters as market segments by median price, dropping outliers."""
    labels = np.asarray(labels, dtype=np.int64)
    prices = np.asarray(prices, dtype=np.float64)
    if labels.shape != prices.shape:
        raise ValidationError("labels and prices lengths differ")
    clusters = sorted(int(c) for c in np.unique(labels))
    medians = {c: float(np.median(prices[labels == c])) for c in clusters}
    kept = [c for c in clusters if medians[c] <= rule.outlier_cutoff]
    if not kept:
        raise ValidationError("every cluster sits above the outlier cutoff; nothing to segment")
    dropped = tuple(c for c in clusters if c not in kept)

    if rule.quantile_thresholds is None:
        order = sorted(kept, key=lambda c: (medians[c], c))
        naming = {c: rule.labels[min(pos, len(rule.labels) - 1)] for pos, c in enumerate(order)}
    else:
        kept_rows = np.isin(labels, kept)
        bounds = np.quantile(prices[kept_rows], rule.quantile_thresholds)
        naming = {c: rule.labels[int(np.searchsorted(bounds, medians[c], side="left"))] for c in kept}

    segments = tuple(naming.get(int(c)) for c in labels)
    return SegmentAssignment(
        segments=segments,
        segment_of_cluster=naming,
        dropped_clusters=dropped,
        cluster_medians=medians,
    )
