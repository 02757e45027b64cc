"""Target-statistics encoding of categorical features.

A category is replaced by a statistic of the target over rows sharing that
category. Two estimators are provided:

* greedy: the in-sample mean, value_i = sum(y_j for x_j == x_i) / count, which
  uses every row including row i itself.
* ordered: rows are visited in a permutation and each row sees only its strict
  history, value_i = (sum_prefix + a * P) / (count_prefix + a), where P is a
  prior (the global target mean by default) and a > 0 its weight. The first
  row in the permutation therefore gets exactly P.

Fitting aggregates per-category target sums and counts; applying the fitted
state to new data uses the smoothed full-sample statistic and falls back to P
for categories never seen. Boolean columns encode as 0/1; numeric columns pass
through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import FeatureSpec, Table
from .errors import ValidationError


@dataclass(frozen=True)
class TargetStatisticsConfig:
    prior: float | None = None  # None -> mean of the training target
    prior_weight: float = 1.0
    mode: str = "ordered"
    seed: int = 0
    n_permutations: int = 1

    def __post_init__(self):
        if self.mode not in ("greedy", "ordered"):
            raise ValidationError(f"unknown encoding mode {self.mode!r}")
        if self.prior_weight < 0:
            raise ValidationError("prior_weight must be non-negative")
        if self.mode == "ordered" and self.prior_weight == 0:
            raise ValidationError("ordered mode needs a strictly positive prior_weight")
        if self.n_permutations < 1:
            raise ValidationError("n_permutations must be at least 1")


@dataclass(frozen=True)
class EncoderState:
    """Frozen result of fitting: per-category target sums/counts plus the prior."""

    prior: float
    prior_weight: float
    mode: str
    seed: int
    n_permutations: int
    features: Mapping[str, Mapping[str, tuple[float, int]]]

    def encode_category(self, feature: str, category) -> float:
        stats = self.features[feature].get(category)
        if stats is None:
            return self.prior
        total, count = stats
        denom = count + self.prior_weight
        if denom == 0:  # only reachable when prior_weight == 0 and the category is unseen
            return self.prior
        return (total + self.prior_weight * self.prior) / denom

    def to_mapping(self) -> dict:
        return {
            "prior": self.prior,
            "prior_weight": self.prior_weight,
            "mode": self.mode,
            "seed": self.seed,
            "n_permutations": self.n_permutations,
            "features": {
                name: {cat: [total, count] for cat, (total, count) in stats.items()}
                for name, stats in self.features.items()
            },
        }

    @staticmethod
    def from_mapping(raw: Mapping) -> "EncoderState":
        return EncoderState(
            prior=float(raw["prior"]),
            prior_weight=float(raw["prior_weight"]),
            mode=str(raw["mode"]),
            seed=int(raw["seed"]),
            n_permutations=int(raw["n_permutations"]),
            features={
                name: {cat: (float(t), int(c)) for cat, (t, c) in stats.items()}
                for name, stats in raw["features"].items()
            },
        )


def greedy_ts(column: Sequence, target: np.ndarray) -> np.ndarray:
    """In-sample per-category target mean, one value per row."""
    target = np.asarray(target, dtype=np.float64)
    col = _require_complete(column)
    if len(col) != len(target):
        raise ValidationError("column and target lengths differ")
    cats, inverse = np.unique(np.asarray(col, dtype=object), return_inverse=True)
    sums = np.bincount(inverse, weights=target, minlength=len(cats))
    counts = np.bincount(inverse, minlength=len(cats))
    return (sums / counts)[inverse]


def ordered_ts(
    column: Sequence,
    target: np.ndarray,
    permutation: Sequence[int],
    *,
    prior_weight: float = 1.0,
    prior: float | None = None,
) -> np.ndarray:
    """History-only per-category statistic along a permutation.

    Row sigma_p sees only rows sigma_1 .. sigma_{p-1}; the encoded value is
    (prefix_sum + a * P) / (prefix_count + a).
    """
    target = np.asarray(target, dtype=np.float64)
    col = _require_complete(column)
    n = len(col)
    if len(target) != n:
        raise ValidationError("column and target lengths differ")
    perm = np.asarray(permutation, dtype=np.intp)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError("permutation must be a bijection over row indices")
    a = float(prior_weight)
    if a <= 0:
        raise ValidationError("ordered statistics need prior_weight > 0")
    p = float(target.mean()) if prior is None else float(prior)

    out = np.empty(n, dtype=np.float64)
    sums: dict = {}
    counts: dict = {}
    for idx in perm:
        cat = col[idx]
        s = sums.get(cat, 0.0)
        c = counts.get(cat, 0)
        out[idx] = (s + a * p) / (c + a)
        sums[cat] = s + target[idx]
        counts[cat] = c + 1
    return out


def fit(table: Table, config: TargetStatisticsConfig) -> EncoderState:
    """Aggregate per-category sums/counts for every categorical column."""
    target = _require_targets(table)
    prior = float(target.mean()) if config.prior is None else float(config.prior)
    features: dict[str, dict[str, tuple[float, int]]] = {}
    for spec in table.schema:
        if spec.kind != "categorical":
            continue
        col = _require_complete(table.columns[spec.name], name=spec.name)
        stats: dict[str, tuple[float, int]] = {}
        for value, y in zip(col, target):
            total, count = stats.get(value, (0.0, 0))
            stats[value] = (total + float(y), count + 1)
        features[spec.name] = stats
    return EncoderState(
        prior=prior,
        prior_weight=config.prior_weight,
        mode=config.mode,
        seed=config.seed,
        n_permutations=config.n_permutations,
        features=features,
    )


def apply(state: EncoderState, table: Table) -> Table:
    """Encode every column to numeric using fitted statistics.

    Categorical cells map to the smoothed statistic (unseen categories to the
    prior), booleans to 0/1, numerics pass through.
    """
    columns: dict[str, np.ndarray] = {}
    schema = []
    for spec in table.schema:
        schema.append(FeatureSpec(spec.name, "numeric", spec.unit))
        col = table.columns[spec.name]
        if spec.kind == "numeric":
            values = col.astype(np.float64)
            if np.isnan(values).any():
                raise ValidationError(f"column {spec.name!r} has missing values; clean the table first")
            columns[spec.name] = values
        elif spec.kind == "boolean":
            cells = _require_complete(col, name=spec.name)
            columns[spec.name] = np.array([1.0 if v else 0.0 for v in cells])
        else:
            cells = _require_complete(col, name=spec.name)
            columns[spec.name] = np.array([state.encode_category(spec.name, v) for v in cells])
    return Table(schema=tuple(schema), columns=columns, target=table.target, row_ids=table.row_ids)


def fit_transform(table: Table, config: TargetStatisticsConfig) -> tuple[Table, EncoderState]:
    """Fit on the table and produce its training-time encoding.

    In greedy mode the training encoding equals apply(): the smoothed in-sample
    statistic (exactly greedy_ts when prior_weight is zero). In ordered mode each
    categorical column is the mean of ordered_ts over n_permutations seeded
    permutations, which keeps each row blind to its own target.
    """
    state = fit(table, config)
    if config.mode == "greedy":
        return apply(state, table), state

    rng = np.random.default_rng(config.seed)
    target = _require_targets(table)
    columns: dict[str, np.ndarray] = {}
    schema = []
    for spec in table.schema:
        schema.append(FeatureSpec(spec.name, "numeric", spec.unit))
        col = table.columns[spec.name]
        if spec.kind == "categorical":
            cells = _require_complete(col, name=spec.name)
            acc = np.zeros(table.n)
            for _ in range(config.n_permutations):
                perm = rng.permutation(table.n)
                acc += ordered_ts(cells, target, perm, prior_weight=config.prior_weight, prior=state.prior)
            columns[spec.name] = acc / config.n_permutations
        elif spec.kind == "boolean":
            cells = _require_complete(col, name=spec.name)
            columns[spec.name] = np.array([1.0 if v else 0.0 for v in cells])
        else:
            values = col.astype(np.float64)
            if np.isnan(values).any():
                raise ValidationError(f"column {spec.name!r} has missing values; clean the table first")
            columns[spec.name] = values
    encoded = Table(schema=tuple(schema), columns=columns, target=table.target, row_ids=table.row_ids)
    return encoded, state


def encode_row(state: EncoderState, schema: Sequence[FeatureSpec], row: Mapping) -> np.ndarray:
    """Encode a single feature mapping into a vector in schema order."""
    out = np.empty(len(schema), dtype=np.float64)
    for j, spec in enumerate(schema):
        if spec.name not in row or row[spec.name] is None:
            raise ValidationError(f"missing value for feature {spec.name!r}")
        value = row[spec.name]
        if spec.kind == "numeric":
            out[j] = float(value)
        elif spec.kind == "boolean":
            out[j] = 1.0 if value else 0.0
        else:
            out[j] = state.encode_category(spec.name, value)
    return out


def _require_complete(column, name: str | None = None) -> list:
    cells = list(column)
    if any(v is None for v in cells):
        label = f"column {name!r}" if name else "column"
        raise ValidationError(f"{label} has missing values; clean the table first")
    return cells


def _require_targets(table: Table) -> np.ndarray:
    if np.isnan(table.target).any():
        raise ValidationError("table has missing targets; clean the table first")
    return table.target
