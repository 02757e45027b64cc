"""Model evaluation: error metrics, residual diagnostics, nested cross-validation.

Metrics follow the usual definitions: RMSE = sqrt(mean squared error), MAPE =
mean(|error| / |target|), explained variance = 1 - Var(error) / Var(target)
(population variances), and the Durbin-Watson statistic sum of squared
successive residual differences over the residual sum of squares, which lives
in [0, 4] with 2 meaning no first-order autocorrelation.

nested_cv shuffles rows into outer folds so every row is tested exactly once;
inside each outer training set an inner holdout picks hyperparameters from a
small grid before refitting on the full outer training set. Encoding is fitted
inside each fold, so no test row ever leaks into its own encoder or model.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import encode, gbdt
from .dataset import Table
from .errors import ValidationError
from ._util import derived_rng

DEFAULT_GRID: tuple[tuple[float, int], ...] = ((0.05, 200), (0.05, 500), (0.1, 200), (0.1, 500))


def rmse(y: Sequence[float], y_hat: Sequence[float]) -> float:
    y, y_hat = _aligned(y, y_hat)
    err = y - y_hat
    return float(np.sqrt(np.mean(err * err)))


def mape(y: Sequence[float], y_hat: Sequence[float]) -> float:
    y, y_hat = _aligned(y, y_hat)
    if np.any(y == 0):
        raise ValidationError("mape is undefined for zero targets")
    return float(np.mean(np.abs(y - y_hat) / np.abs(y)))


def explained_variance(y: Sequence[float], y_hat: Sequence[float]) -> float:
    y, y_hat = _aligned(y, y_hat)
    var_y = float(np.var(y))
    if var_y == 0:
        raise ValidationError("explained variance is undefined for a constant target")
    return 1.0 - float(np.var(y - y_hat)) / var_y


def durbin_watson(residuals: Sequence[float]) -> float:
    e = np.asarray(residuals, dtype=np.float64)
    if e.ndim != 1 or e.size < 2:
        raise ValidationError("need at least two residuals")
    denom = float(np.sum(e * e))
    if denom == 0:
        raise ValidationError("durbin-watson is undefined for all-zero residuals")
    diff = np.diff(e)
    return float(np.sum(diff * diff)) / denom


def _aligned(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or y.size == 0:
        raise ValidationError("predictions and targets must be equal-length non-empty vectors")
    return y, y_hat


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mape: float
    explained_variance: float
    n: int

    def __post_init__(self):
        if self.rmse < 0 or self.mape < 0 or self.explained_variance > 1 or self.n < 1:
            raise ValidationError("metrics out of range")


def metrics_report(y, y_hat) -> MetricsReport:
    y, y_hat = _aligned(y, y_hat)
    return MetricsReport(
        rmse=rmse(y, y_hat),
        mape=mape(y, y_hat),
        explained_variance=explained_variance(y, y_hat),
        n=int(y.size),
    )


# ---------------------------------------------------------------------------
# Residual diagnostics


@dataclass(frozen=True)
class GroupResidualSummary:
    group: object
    n: int
    mean: float
    sd: float
    flagged: bool  # |mean| exceeds twice the pooled standard error


@dataclass(frozen=True)
class ResidualDiagnostics:
    dw: float
    mean: float
    sd: float
    skew: float
    excess_kurtosis: float
    groups: tuple[GroupResidualSummary, ...] = ()


def grouped_residuals(residuals: Sequence[float], groups: Sequence) -> tuple[GroupResidualSummary, ...]:
    """Per-group residual mean/sd, flagging groups the model systematically misses."""
    e = np.asarray(residuals, dtype=np.float64)
    g = np.asarray(groups, dtype=object)
    if e.shape != g.shape:
        raise ValidationError("residuals and groups lengths differ")
    if e.size == 0:
        raise ValidationError("need at least one residual")
    pooled = float(e.std())
    out = []
    for key in sorted(set(g.tolist()), key=lambda v: (str(type(v)), v)):
        sel = np.array([v == key for v in g], dtype=bool)
        grp = e[sel]
        mean = float(grp.mean())
        out.append(
            GroupResidualSummary(
                group=key,
                n=int(grp.size),
                mean=mean,
                sd=float(grp.std()),
                flagged=bool(abs(mean) > 2.0 * pooled / np.sqrt(grp.size)),
            )
        )
    return tuple(out)


def residual_diagnostics(
    residuals: Sequence[float],
    *,
    order_keys: Sequence[Sequence] | None = None,
    groups: Sequence | None = None,
) -> ResidualDiagnostics:
    """Moments plus Durbin-Watson; pass order_keys (least significant first, as
    in np.lexsort) to fix the sequence the autocorrelation test runs over."""
    e = np.asarray(residuals, dtype=np.float64)
    if order_keys is not None:
        e = e[np.lexsort(tuple(np.asarray(k) for k in order_keys))]
    m = float(e.mean())
    centered = e - m
    m2 = float(np.mean(centered**2))
    if m2 > 0:
        skew = float(np.mean(centered**3)) / m2**1.5
        kurt = float(np.mean(centered**4)) / m2**2 - 3.0
    else:
        skew, kurt = 0.0, 0.0
    return ResidualDiagnostics(
        dw=durbin_watson(e),
        mean=m,
        sd=float(np.sqrt(m2)),
        skew=skew,
        excess_kurtosis=kurt,
        groups=grouped_residuals(e, groups) if groups is not None else (),
    )


# ---------------------------------------------------------------------------
# Nested cross-validation and bootstrap


@dataclass(frozen=True)
class CVPlan:
    folds: int = 5
    inner_fraction: float = 0.8
    bootstrap: int = 100
    seed: int = 0
    grid: tuple[tuple[float, int], ...] | None = None  # (learning_rate, iterations); None -> DEFAULT_GRID
    max_workers: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError("need at least two folds")
        if not 0.0 < self.inner_fraction < 1.0:
            raise ValidationError("inner_fraction must be inside (0, 1)")
        if self.bootstrap < 0:
            raise ValidationError("bootstrap count must be non-negative")
        if self.max_workers < 1:
            raise ValidationError("max_workers must be at least 1")
        if self.grid is not None and not self.grid:
            raise ValidationError("grid must not be empty")


@dataclass(frozen=True)
class FoldReport:
    fold: int
    learning_rate: float
    iterations: int
    metrics: MetricsReport
    test_row_ids: tuple[str, ...]


@dataclass(frozen=True)
class CVSummary:
    folds: tuple[FoldReport, ...]
    rmse_mean: float
    rmse_sd: float
    mape_mean: float
    mape_sd: float
    ev_mean: float
    ev_sd: float
    n_rows: int


def _run_fold(
    fold: int,
    table: Table,
    ts_config: encode.TargetStatisticsConfig,
    train_config: gbdt.TrainConfig,
    plan: CVPlan,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
) -> FoldReport:
    grid = plan.grid if plan.grid is not None else DEFAULT_GRID
    outer_train = table.select_rows(train_idx)
    test = table.select_rows(test_idx)

    best: tuple[float, int] | None = None
    if len(grid) == 1:
        best = grid[0]
    else:
        rng = derived_rng(plan.seed, 0x1BBE, fold)
        perm = rng.permutation(len(train_idx))
        n_inner = min(max(int(round(plan.inner_fraction * len(train_idx))), 1), len(train_idx) - 1)
        inner_train = outer_train.select_rows(perm[:n_inner])
        inner_val = outer_train.select_rows(perm[n_inner:])
        best_err = np.inf
        for lr, iterations in grid:
            cfg = replace(train_config, learning_rate=lr, iterations=iterations)
            model = gbdt.fit_model(inner_train, ts_config, cfg)
            err = rmse(inner_val.target, gbdt.predict_batch(model, inner_val))
            if err < best_err:
                best_err = err
                best = (lr, iterations)

    lr, iterations = best
    final = gbdt.fit_model(outer_train, ts_config, replace(train_config, learning_rate=lr, iterations=iterations))
    report = metrics_report(test.target, gbdt.predict_batch(final, test))
    return FoldReport(fold=fold, learning_rate=lr, iterations=iterations, metrics=report, test_row_ids=test.row_ids)


def nested_cv(
    table: Table,
    ts_config: encode.TargetStatisticsConfig,
    train_config: gbdt.TrainConfig,
    plan: CVPlan,
) -> CVSummary:
    """Outer k-fold / inner holdout model selection; every row tested once.

    Fold work is independent and seeded per fold, so results are identical
    whatever max_workers is.
    """
    if table.n < plan.folds:
        raise ValidationError("fewer rows than folds")
    order = derived_rng(plan.seed, 0x0C5).permutation(table.n)
    slices = np.array_split(order, plan.folds)

    jobs = []
    for fold in range(plan.folds):
        test_idx = slices[fold]
        train_idx = np.concatenate([slices[f] for f in range(plan.folds) if f != fold])
        jobs.append((fold, table, ts_config, train_config, plan, train_idx, test_idx))

    if plan.max_workers == 1:
        reports = [_run_fold(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=plan.max_workers) as pool:
            reports = list(pool.map(lambda job: _run_fold(*job), jobs))

    r = np.array([f.metrics.rmse for f in reports])
    p = np.array([f.metrics.mape for f in reports])
    v = np.array([f.metrics.explained_variance for f in reports])
    return CVSummary(
        folds=tuple(reports),
        rmse_mean=float(r.mean()), rmse_sd=float(r.std()),
        mape_mean=float(p.mean()), mape_sd=float(p.std()),
        ev_mean=float(v.mean()), ev_sd=float(v.std()),
        n_rows=table.n,
    )


@dataclass(frozen=True)
class BootstrapSummary:
    iterations: int
    rmse_mean: float
    rmse_sd: float
    mape_mean: float
    mape_sd: float
    ev_mean: float
    ev_sd: float


def _resample_table(table: Table, picked: np.ndarray) -> Table:
    """Row sample with replacement; repeated rows get suffixed ids to stay unique."""
    cols = {s.name: table.columns[s.name][picked] for s in table.schema}
    seen: dict[str, int] = {}
    ids = []
    for i in picked:
        rid = table.row_ids[i]
        c = seen.get(rid, 0)
        seen[rid] = c + 1
        ids.append(rid if c == 0 else f"{rid}#{c}")
    return Table(schema=table.schema, columns=cols, target=table.target[picked], row_ids=tuple(ids))


def bootstrap_metrics(
    table: Table,
    ts_config: encode.TargetStatisticsConfig,
    train_config: gbdt.TrainConfig,
    plan: CVPlan,
) -> BootstrapSummary:
    """Resample-with-replacement training sets; score each model on its
    out-of-bag rows and summarize the metric spread."""
    if plan.bootstrap < 1:
        raise ValidationError("plan.bootstrap must be at least 1")
    n = table.n
    rows_r, rows_p, rows_v = [], [], []
    for it in range(plan.bootstrap):
        rng = derived_rng(plan.seed, 0xB002, it)
        picked = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), picked)
        if oob.size == 0:
            continue
        model = gbdt.fit_model(_resample_table(table, np.sort(picked)), ts_config, train_config)
        report = metrics_report(table.target[oob], gbdt.predict_batch(model, table.select_rows(oob)))
        rows_r.append(report.rmse)
        rows_p.append(report.mape)
        rows_v.append(report.explained_variance)
    if not rows_r:
        raise ValidationError("no bootstrap iteration produced out-of-bag rows")
    r, p, v = np.array(rows_r), np.array(rows_p), np.array(rows_v)
    return BootstrapSummary(
        iterations=len(rows_r),
        rmse_mean=float(r.mean()), rmse_sd=float(r.std()),
        mape_mean=float(p.mean()), mape_sd=float(p.std()),
        ev_mean=float(v.mean()), ev_sd=float(v.std()),
    )
