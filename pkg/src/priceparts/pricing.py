"""Component pricing: turn model attributions into currency statements.

Every price here decomposes as baseline + sum of per-feature contributions,
with the baseline being the mean prediction over the background population.
Comparisons difference two such decompositions, so shared context cancels and
a single changed option surfaces as that feature's delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import explain, gbdt
from .errors import ValidationError
from .dataset import Table


@dataclass(frozen=True)
class VehicleConfig:
    """A scoreable vehicle: raw feature values keyed by feature name."""

    features: Mapping[str, object]
    label: str | None = None


@dataclass(frozen=True)
class ComponentLine:
    feature: str
    value: object
    contribution: float


@dataclass(frozen=True)
class PriceBreakdown:
    label: str | None
    predicted_price: float
    baseline: float
    lines: tuple[ComponentLine, ...]  # sorted by |contribution| descending


@dataclass(frozen=True)
class DeltaLine:
    feature: str
    value_base: object
    value_variant: object
    delta: float


@dataclass(frozen=True)
class ComparisonReport:
    price_base: float
    price_variant: float
    total_delta: float
    lines: tuple[DeltaLine, ...]  # sorted by |delta| descending


@dataclass(frozen=True)
class DependenceSeries:
    feature: str
    values: tuple  # raw feature values, one per sampled row
    phi: np.ndarray
    main_effects: np.ndarray | None = None
    strongest_interactor: str | None = None


@dataclass(frozen=True)
class GroupEffect:
    group: object
    n: int
    mean_phi: float
    sd_phi: float


@dataclass(frozen=True)
class Quote:
    baseline_price: float
    quoted_price: float
    total_delta: float
    lines: tuple[DeltaLine, ...]  # one per requested change
    residual_delta: float  # total minus the changed features' deltas


def _feature_index(ensemble: gbdt.Ensemble, feature: str) -> int:
    try:
        return ensemble.feature_names.index(feature)
    except ValueError:
        raise ValidationError(f"model has no feature named {feature!r}") from None


def breakdown(ensemble: gbdt.Ensemble, config: VehicleConfig, background: explain.BackgroundSet) -> PriceBreakdown:
    """Per-feature price decomposition of one configuration."""
    att = explain.shapley_fast(ensemble, config.features, background, instance_id=config.label)
    order = np.lexsort((np.arange(len(att.phi)), -np.abs(att.phi)))
    lines = tuple(
        ComponentLine(
            feature=ensemble.feature_names[j],
            value=config.features[ensemble.feature_names[j]],
            contribution=float(att.phi[j]),
        )
        for j in order
    )
    return PriceBreakdown(
        label=config.label,
        predicted_price=gbdt.predict(ensemble, config.features),
        baseline=att.phi0,
        lines=lines,
    )


def compare(
    ensemble: gbdt.Ensemble,
    base: VehicleConfig,
    variant: VehicleConfig,
    background: explain.BackgroundSet,
) -> ComparisonReport:
    """Attribution difference between two configurations.

    Feature deltas sum to the prediction difference; swapping the arguments
    negates every delta exactly.
    """
    att_base = explain.shapley_fast(ensemble, base.features, background)
    att_var = explain.shapley_fast(ensemble, variant.features, background)
    delta = att_var.phi - att_base.phi
    order = np.lexsort((np.arange(len(delta)), -np.abs(delta)))
    lines = tuple(
        DeltaLine(
            feature=ensemble.feature_names[j],
            value_base=base.features[ensemble.feature_names[j]],
            value_variant=variant.features[ensemble.feature_names[j]],
            delta=float(delta[j]),
        )
        for j in order
    )
    price_base = gbdt.predict(ensemble, base.features)
    price_variant = gbdt.predict(ensemble, variant.features)
    return ComparisonReport(
        price_base=price_base,
        price_variant=price_variant,
        total_delta=price_variant - price_base,
        lines=lines,
    )


def dependence(
    ensemble: gbdt.Ensemble,
    table: Table,
    feature: str,
    background: explain.BackgroundSet,
    *,
    with_interactions: bool = False,
) -> DependenceSeries:
    """The feature's attribution across a sample of rows.

    With interactions enabled, also returns the diagonal main effect per row
    and names the partner feature with the largest total |interaction|, which
    is what explains vertical dispersion at a fixed feature value.
    """
    j = _feature_index(ensemble, feature)
    raw_values = tuple(table.columns[feature])
    atts = explain.shapley_batch(ensemble, table, background)
    phi = np.array([a.phi[j] for a in atts])
    if not with_interactions:
        return DependenceSeries(feature=feature, values=raw_values, phi=phi)

    mats = explain.interactions_batch(ensemble, table, background)
    main = np.array([m.values[j, j] for m in mats])
    strength = np.zeros(ensemble.n_features)
    for m in mats:
        strength += np.abs(m.values[j])
    strength[j] = -np.inf
    partner = None
    if ensemble.n_features > 1:
        partner = ensemble.feature_names[int(np.argmax(strength))]
    return DependenceSeries(
        feature=feature,
        values=raw_values,
        phi=phi,
        main_effects=main,
        strongest_interactor=partner,
    )


def _grouped_phi(
    ensemble: gbdt.Ensemble,
    attributions: Sequence[explain.AttributionVector],
    feature: str,
    groups: Sequence,
) -> list[GroupEffect]:
    j = _feature_index(ensemble, feature)
    if len(attributions) != len(groups):
        raise ValidationError("attributions and grouping column lengths differ")
    if not attributions:
        raise ValidationError("need at least one attribution")
    phi = np.array([a.phi[j] for a in attributions])
    keys = np.asarray(groups, dtype=object)
    out = []
    for key in sorted(set(keys.tolist())):
        sel = np.array([v == key for v in keys], dtype=bool)
        vals = phi[sel]
        out.append(GroupEffect(group=key, n=int(vals.size), mean_phi=float(vals.mean()), sd_phi=float(vals.std())))
    return out


def trend(
    ensemble: gbdt.Ensemble,
    attributions: Sequence[explain.AttributionVector],
    feature: str,
    years: Sequence,
) -> list[GroupEffect]:
    """Mean and spread of the feature's attribution per model year, ascending."""
    return _grouped_phi(ensemble, attributions, feature, years)


def class_effect(
    ensemble: gbdt.Ensemble,
    attributions: Sequence[explain.AttributionVector],
    feature: str,
    classes: Sequence,
) -> list[GroupEffect]:
    """Mean and spread of the feature's attribution per vehicle class."""
    return _grouped_phi(ensemble, attributions, feature, classes)


def scp_quote(
    ensemble: gbdt.Ensemble,
    baseline: VehicleConfig,
    changes: Mapping[str, object],
    background: explain.BackgroundSet,
) -> Quote:
    """Price a configuration change as credits/penalties per changed feature.

    The quoted price is the model's prediction for the modified configuration;
    each change's delta is its attribution shift against the baseline vehicle.
    """
    names = set(ensemble.feature_names)
    unknown = sorted(set(changes) - names)
    if unknown:
        raise ValidationError(f"unknown feature(s) in changes: {', '.join(unknown)}")
    modified = dict(baseline.features)
    modified.update(changes)
    report = compare(ensemble, baseline, VehicleConfig(features=modified, label=baseline.label), background)
    lines = tuple(line for line in report.lines if line.feature in changes)
    changed_sum = float(sum(line.delta for line in lines))
    return Quote(
        baseline_price=report.price_base,
        quoted_price=report.price_variant,
        total_delta=report.total_delta,
        lines=lines,
        residual_delta=report.total_delta - changed_sum,
    )
