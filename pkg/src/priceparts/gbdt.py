"""Gradient-boosted oblivious decision trees for squared-error regression.

The model is F(x) = base_score + learning_rate * sum_k f_k(x). Each f_k is an
oblivious tree: every node at a given level shares one (feature, threshold)
pair, so a depth-D tree is D split decisions and 2**D leaves, and a row's leaf
index is just the D routing bits packed most-significant-first. Trees are fit
to the current residuals; leaves carry the mean residual of their rows.

Split search is histogram-based: candidate thresholds come from per-feature
quantile bins frozen before boosting, and each level picks the (feature,
threshold) maximizing sum_leaf S^2/n, which is the squared-error gain. Ties go
to the lowest feature index, then the lowest threshold. A row routes right
exactly when value > threshold, so equality stays left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import encode
from .dataset import FeatureSpec, Table
from .errors import ValidationError
from ._util import config_digest


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    depth: int = 4
    learning_rate: float = 0.1
    bins: int = 255
    subsample: float = 1.0
    seed: int = 0
    stop_train_rmse: float | None = None  # optional deterministic stop once training error is this low

    def __post_init__(self):
        if self.iterations < 0:
            raise ValidationError("iterations must be non-negative")
        if not 1 <= self.depth <= 8:
            raise ValidationError("depth must be between 1 and 8")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must be in (0, 1]")
        if self.bins < 2:
            raise ValidationError("bins must be at least 2")
        if not 0.0 < self.subsample <= 1.0:
            raise ValidationError("subsample must be in (0, 1]")

    def to_mapping(self) -> dict:
        return {
            "iterations": self.iterations,
            "depth": self.depth,
            "learning_rate": self.learning_rate,
            "bins": self.bins,
            "subsample": self.subsample,
            "seed": self.seed,
            "stop_train_rmse": self.stop_train_rmse,
        }


@dataclass(frozen=True)
class ObliviousTree:
    """One split per level; leaf k holds the value for routing bit pattern k."""

    depth: int
    features: tuple[int, ...]
    thresholds: tuple[float, ...]
    leaf_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.features) != self.depth or len(self.thresholds) != self.depth:
            raise ValidationError("need exactly one (feature, threshold) per level")
        if len(self.leaf_values) != 1 << self.depth:
            raise ValidationError("need exactly 2**depth leaf values")


@dataclass(eq=False)
class Ensemble:
    """A trained model plus everything needed to score raw rows."""

    base_score: float
    learning_rate: float
    trees: tuple[ObliviousTree, ...]
    schema: tuple[FeatureSpec, ...]
    encoder: encode.EncoderState
    seed: int
    config_hash: str
    train_mse: tuple[float, ...] = ()

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.schema)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @cached_property
    def _stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tree parameters as arrays: features (T, D), thresholds (T, D), leaves (T, 2**D)."""
        if not self.trees:
            return (np.empty((0, 0), dtype=np.intp), np.empty((0, 0)), np.empty((0, 1)))
        depth = self.trees[0].depth
        feats = np.array([t.features for t in self.trees], dtype=np.intp)
        thrs = np.array([t.thresholds for t in self.trees], dtype=np.float64)
        vals = np.array([t.leaf_values for t in self.trees], dtype=np.float64)
        assert feats.shape == (len(self.trees), depth)
        return feats, thrs, vals


def _candidate_thresholds(column: np.ndarray, bins: int) -> np.ndarray:
    """Split candidates for one feature: unique values, thinned to quantiles when dense."""
    uniq = np.unique(column)
    if uniq.size <= 1:
        return np.empty(0)
    if uniq.size - 1 <= bins - 1:
        return uniq[:-1]
    qs = np.quantile(column, np.arange(1, bins) / bins, method="lower")
    thr = np.unique(qs)
    return thr[thr < uniq[-1]]


def _leaf_codes(X: np.ndarray, features: Sequence[int], thresholds: Sequence[float]) -> np.ndarray:
    codes = np.zeros(X.shape[0], dtype=np.int64)
    for f, t in zip(features, thresholds):
        codes = (codes << 1) | (X[:, f] > t)
    return codes


def train(
    table: Table,
    config: TrainConfig,
    *,
    encoder: encode.EncoderState | None = None,
    raw_schema: tuple[FeatureSpec, ...] | None = None,
    config_hash: str | None = None,
) -> Ensemble:
    """Fit a boosted ensemble on an all-numeric table.

    The table must be fully numeric (run the encoder first for raw data) and
    free of missing cells. Pass ``encoder``/``raw_schema`` to keep the original
    categorical schema attached for scoring raw rows later.
    """
    X = table.to_matrix()
    y = np.asarray(table.target, dtype=np.float64)
    if np.isnan(y).any():
        raise ValidationError("table has missing targets; clean the table first")
    if np.isnan(X).any():
        raise ValidationError("table has missing cells; clean the table first")
    n, m = X.shape
    if n == 0:
        raise ValidationError("cannot train on an empty table")
    if m == 0 and config.iterations > 0:
        raise ValidationError("cannot grow trees without features")

    base = float(y.mean())
    if encoder is None:
        encoder = encode.EncoderState(
            prior=base, prior_weight=0.0, mode="greedy", seed=0, n_permutations=1, features={},
        )
    if raw_schema is None:
        raw_schema = table.schema
    if config_hash is None:
        config_hash = config_digest({"train": config.to_mapping()})

    thresholds = [_candidate_thresholds(X[:, j], config.bins) for j in range(m)]
    bin_idx = np.empty((n, m), dtype=np.int32)
    for j in range(m):
        bin_idx[:, j] = np.searchsorted(thresholds[j], X[:, j], side="left")

    rng = np.random.default_rng(config.seed)
    depth = config.depth
    n_leaves = 1 << depth
    F = np.full(n, base)
    residual = y - F
    mse_history = [float(np.mean(residual * residual))]
    trees: list[ObliviousTree] = []

    for _ in range(config.iterations):
        if config.subsample < 1.0:
            size = max(1, int(round(config.subsample * n)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = np.arange(n)
        r_sub = residual[rows]
        group = np.zeros(rows.size, dtype=np.int64)
        level_features: list[int] = []
        level_thresholds: list[float] = []

        for d in range(depth):
            n_groups = 1 << d
            best_score = -np.inf
            best_feature = -1
            best_threshold = 0.0
            for j in range(m):
                thr = thresholds[j]
                if thr.size == 0:
                    continue
                nb = thr.size + 1
                flat = group * nb + bin_idx[rows, j]
                cnt = np.bincount(flat, minlength=n_groups * nb).reshape(n_groups, nb)
                sm = np.bincount(flat, weights=r_sub, minlength=n_groups * nb).reshape(n_groups, nb)
                ccnt = np.cumsum(cnt, axis=1)
                csm = np.cumsum(sm, axis=1)
                left_n, left_s = ccnt[:, :-1], csm[:, :-1]
                right_n = ccnt[:, -1:] - left_n
                right_s = csm[:, -1:] - left_s
                gain = np.divide(left_s * left_s, left_n, out=np.zeros_like(left_s), where=left_n > 0)
                gain += np.divide(right_s * right_s, right_n, out=np.zeros_like(right_s), where=right_n > 0)
                per_split = gain.sum(axis=0)
                k = int(np.argmax(per_split))
                if per_split[k] > best_score:
                    best_score = float(per_split[k])
                    best_feature = j
                    best_threshold = float(thr[k])
            if best_feature < 0:
                # every feature is constant: degenerate level that keeps all rows left
                best_feature = 0
                best_threshold = float(X[:, 0].max())
            level_features.append(best_feature)
            level_thresholds.append(best_threshold)
            group = (group << 1) | (X[rows, best_feature] > best_threshold)

        counts = np.bincount(group, minlength=n_leaves)
        sums = np.bincount(group, weights=r_sub, minlength=n_leaves)
        values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        trees.append(
            ObliviousTree(
                depth=depth,
                features=tuple(level_features),
                thresholds=tuple(level_thresholds),
                leaf_values=tuple(float(v) for v in values),
            )
        )
        codes = _leaf_codes(X, level_features, level_thresholds)
        F = F + config.learning_rate * values[codes]
        residual = y - F
        mse = float(np.mean(residual * residual))
        mse_history.append(mse)
        if config.stop_train_rmse is not None and mse <= config.stop_train_rmse**2:
            break

    return Ensemble(
        base_score=base,
        learning_rate=config.learning_rate,
        trees=tuple(trees),
        schema=raw_schema,
        encoder=encoder,
        seed=config.seed,
        config_hash=config_hash,
        train_mse=tuple(mse_history),
    )


def fit_model(table: Table, ts_config: encode.TargetStatisticsConfig, train_config: TrainConfig) -> Ensemble:
    """Encode a raw (cleaned) table and train on the result."""
    encoded, state = encode.fit_transform(table, ts_config)
    digest = config_digest({
        "train": train_config.to_mapping(),
        "encode": {
            "prior": state.prior,
            "prior_weight": ts_config.prior_weight,
            "mode": ts_config.mode,
            "seed": ts_config.seed,
            "n_permutations": ts_config.n_permutations,
        },
    })
    return train(encoded, train_config, encoder=state, raw_schema=table.schema, config_hash=digest)


def _as_matrix(ensemble: Ensemble, data) -> np.ndarray:
    if isinstance(data, Table):
        if any(s.kind != "numeric" for s in data.schema):
            data = encode.apply(ensemble.encoder, data)
        return data.to_matrix()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.n_features:
        raise ValidationError(f"expected a (n, {ensemble.n_features}) matrix, got shape {X.shape}")
    return X


def predict_batch(ensemble: Ensemble, data) -> np.ndarray:
    """Score many rows; accepts a Table (raw or encoded) or a numeric matrix."""
    X = _as_matrix(ensemble, data)
    out = np.full(X.shape[0], ensemble.base_score)
    if not ensemble.trees:
        return out
    feats, thrs, vals = ensemble._stacked
    depth = ensemble.trees[0].depth
    shifts = np.arange(depth - 1, -1, -1)
    for k in range(feats.shape[0]):
        bits = X[:, feats[k]] > thrs[k]
        codes = (bits.astype(np.int64) << shifts).sum(axis=1)
        out = out + ensemble.learning_rate * vals[k, codes]
    return out


def predict(ensemble: Ensemble, row) -> float:
    """Score one row: a feature mapping (raw values) or a numeric vector."""
    if isinstance(row, Mapping):
        x = encode.encode_row(ensemble.encoder, ensemble.schema, row)
    else:
        x = np.asarray(row, dtype=np.float64)
        if x.shape != (ensemble.n_features,):
            raise ValidationError(f"expected {ensemble.n_features} feature values, got shape {x.shape}")
    return float(predict_batch(ensemble, x[None, :])[0])
