"""Command-line entry points.

Subcommands cover the full workflow: synth, ingest, train, eval, explain,
cluster, compare, dependence, importance, trend, quote. Every command writes
its outputs plus a manifest into --out (or $PRICEPARTS_OUT), echoes the seed
it used when stochastic, and is re-runnable: identical inputs and seed give
byte-identical outputs apart from the optional model timestamp.

Settings come from defaults, then an INI config file (--config), then flags,
in that order of precedence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import cluster as cluster_mod
from . import dataset, encode, evaluate, explain, gbdt, persist, pricing
from .errors import ConfigError, PricePartsError, ValidationError
from ._util import atomic_write_text, canonical_json

OUT_ENV = "PRICEPARTS_OUT"
WORKERS_ENV = "PRICEPARTS_MAX_WORKERS"
TIMESTAMP_ENV = "PRICEPARTS_TIMESTAMP"


# ---------------------------------------------------------------------------
# Shared plumbing


def _load_schema(path) -> tuple[tuple[dataset.FeatureSpec, ...], str]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        features = tuple(
            dataset.FeatureSpec(d["name"], d["kind"], d.get("unit")) for d in raw["features"]
        )
        return features, str(raw.get("target", "price"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed schema file ({exc})") from None


def _schema_mapping(schema, target) -> dict:
    return {
        "target": target,
        "features": [{"name": s.name, "kind": s.kind, "unit": s.unit} for s in schema],
    }


def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        raise ConfigError(f"no output directory: pass --out or set ${OUT_ENV}")
    os.makedirs(out, exist_ok=True)
    return out


def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        cp.read(path)
    return cp


def _cfg(cp, section, key, cast, default):
    if cp.has_option(section, key):
        text = cp.get(section, key)
        try:
            if cast is bool:
                return text.strip().lower() in ("true", "1", "yes")
            return cast(text)
        except ValueError:
            raise ConfigError(f"config [{section}] {key} = {text!r}: not a valid {cast.__name__}") from None
    return default


def _first(*values):
    for v in values:
        if v is not None:
            return v
    return None


def _train_config(cp, args) -> gbdt.TrainConfig:
    return gbdt.TrainConfig(
        iterations=_first(getattr(args, "iterations", None), _cfg(cp, "train", "iterations", int, 500)),
        depth=_first(getattr(args, "depth", None), _cfg(cp, "train", "depth", int, 4)),
        learning_rate=_first(getattr(args, "learning_rate", None), _cfg(cp, "train", "learning_rate", float, 0.1)),
        bins=_first(getattr(args, "bins", None), _cfg(cp, "train", "bins", int, 255)),
        subsample=_first(getattr(args, "subsample", None), _cfg(cp, "train", "subsample", float, 1.0)),
        seed=_first(getattr(args, "seed", None), _cfg(cp, "train", "seed", int, 0)),
    )


def _ts_config(cp, args) -> encode.TargetStatisticsConfig:
    prior = _cfg(cp, "encode", "prior", float, None)
    return encode.TargetStatisticsConfig(
        prior=prior,
        prior_weight=_first(getattr(args, "prior_weight", None), _cfg(cp, "encode", "prior_weight", float, 1.0)),
        mode=_first(getattr(args, "mode", None), _cfg(cp, "encode", "mode", str, "ordered")),
        seed=_first(getattr(args, "encode_seed", None), _cfg(cp, "encode", "seed", int, 0)),
        n_permutations=_first(getattr(args, "permutations", None), _cfg(cp, "encode", "permutations", int, 1)),
    )


def _cv_plan(cp, args) -> evaluate.CVPlan:
    lrs = _cfg(cp, "cv", "grid_learning_rates", str, "0.05,0.1")
    its = _cfg(cp, "cv", "grid_iterations", str, "200,500")
    grid = tuple(sorted((float(a), int(b)) for a in lrs.split(",") for b in its.split(",")))
    workers = _first(
        getattr(args, "max_workers", None),
        int(os.environ[WORKERS_ENV]) if os.environ.get(WORKERS_ENV) else None,
        _cfg(cp, "cv", "max_workers", int, 1),
    )
    return evaluate.CVPlan(
        folds=_first(getattr(args, "folds", None), _cfg(cp, "cv", "folds", int, 5)),
        inner_fraction=_cfg(cp, "cv", "inner_fraction", float, 0.8),
        bootstrap=_first(getattr(args, "bootstrap", None), _cfg(cp, "cv", "bootstrap", int, 100)),
        seed=_first(getattr(args, "seed", None), _cfg(cp, "cv", "seed", int, 0)),
        grid=grid,
        max_workers=workers,
    )


def _background(ensemble, table, cp, args) -> tuple[explain.BackgroundSet, int]:
    size = _first(getattr(args, "background", None), _cfg(cp, "explain", "background", int, explain.DEFAULT_BACKGROUND_SIZE))
    seed = _first(getattr(args, "background_seed", None), _cfg(cp, "explain", "background_seed", int, 0))
    full = bool(getattr(args, "full_background", False) or _cfg(cp, "explain", "full_background", bool, False))
    return explain.BackgroundSet.from_table(ensemble, table, size=size, seed=seed, full=full), seed


def _load_clean_table(args, schema, target) -> dataset.Table:
    table = dataset.load_table(args.data, schema, target_column=target)
    if table.has_missing():
        raise ValidationError(f"{args.data} has missing cells; run `priceparts ingest` first")
    return table


def _model_schema_and_target(args):
    ensemble = persist.load_model(args.model)
    target = getattr(args, "target", None) or "price"
    return ensemble, ensemble.schema, target


def _pick_row(table: dataset.Table, row_id: str) -> int:
    try:
        return table.row_ids.index(row_id)
    except ValueError:
        raise ValidationError(f"no row with id {row_id!r}") from None


def _write_manifest(out, command, files, seed=None) -> None:
    payload = {"command": command, "outputs": sorted(files), "seed": seed}
    atomic_write_text(os.path.join(out, "manifest.json"), canonical_json(payload))


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _fmt(v) -> str:
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_value(spec: dataset.FeatureSpec, text: str):
    if spec.kind == "numeric":
        return float(text)
    if spec.kind == "boolean":
        word = text.strip().lower()
        if word in ("true", "1"):
            return True
        if word in ("false", "0"):
            return False
        raise ValidationError(f"{spec.name}: cannot parse {text!r} as a boolean")
    return text


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if args.seed is not None:
            raw = {**raw, "seed": args.seed}
        spec = dataset.market_spec_from_mapping(raw)
    else:
        spec = dataset.demo_market_spec(
            n_rows=args.rows if args.rows is not None else 5000,
            noise_sd=args.noise_sd if args.noise_sd is not None else 300.0,
            seed=args.seed if args.seed is not None else 11,
        )
    table, truth = dataset.generate_synthetic_market(spec)
    dataset.write_table(table, os.path.join(out, "market.csv"))
    dataset.write_ground_truth(truth, os.path.join(out, "groundtruth.csv"))
    atomic_write_text(os.path.join(out, "schema.json"), canonical_json(_schema_mapping(spec.schema, "price")))
    _write_manifest(out, "synth", ["market.csv", "groundtruth.csv", "schema.json"], seed=spec.seed)
    print(f"seed: {spec.seed}")
    print(f"wrote {table.n} rows to {out}/market.csv")
    return 0


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    schema, target = _load_schema(args.schema)
    table = dataset.load_table(args.data, schema, target_column=target)
    cleaned = dataset.clean(table, policy=args.policy)
    dataset.write_table(cleaned, os.path.join(out, "cleaned.csv"), target_column=target)
    report = {
        "rows_in": table.n,
        "rows_out": cleaned.n,
        "rows_dropped": table.n - cleaned.n,
        "policy": args.policy,
    }
    atomic_write_text(os.path.join(out, "ingest_report.json"), canonical_json(report))
    _write_manifest(out, "ingest", ["cleaned.csv", "ingest_report.json"])
    print(f"kept {cleaned.n} of {table.n} rows")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    schema, target = _load_schema(args.schema)
    table = _load_clean_table(args, schema, target)
    train_cfg = _train_config(cp, args)
    ts_cfg = _ts_config(cp, args)
    model = gbdt.fit_model(table, ts_cfg, train_cfg)
    stamp = os.environ.get(TIMESTAMP_ENV, datetime.now(timezone.utc).isoformat(timespec="seconds"))
    persist.save_model(model, os.path.join(out, "model.json"), created_at=stamp)
    report = {
        "n_rows": table.n,
        "n_features": model.n_features,
        "trees": len(model.trees),
        "final_train_rmse": float(np.sqrt(model.train_mse[-1])),
        "config_hash": model.config_hash,
        "train": train_cfg.to_mapping(),
        "encode": {"mode": ts_cfg.mode, "prior_weight": ts_cfg.prior_weight,
                   "permutations": ts_cfg.n_permutations, "seed": ts_cfg.seed},
    }
    atomic_write_text(os.path.join(out, "train_report.json"), canonical_json(report))
    _write_manifest(out, "train", ["model.json", "train_report.json"], seed=train_cfg.seed)
    print(f"seed: {train_cfg.seed}")
    print(f"trained {len(model.trees)} trees; train rmse {report['final_train_rmse']:.2f}")
    return 0


def cmd_eval(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    schema, target = _load_schema(args.schema)
    table = _load_clean_table(args, schema, target)
    plan = _cv_plan(cp, args)
    summary = evaluate.nested_cv(table, _ts_config(cp, args), _train_config(cp, args), plan)
    payload = {
        "folds": [
            {
                "fold": f.fold,
                "learning_rate": f.learning_rate,
                "iterations": f.iterations,
                "rmse": f.metrics.rmse,
                "mape": f.metrics.mape,
                "explained_variance": f.metrics.explained_variance,
                "n_test": f.metrics.n,
            }
            for f in summary.folds
        ],
        "aggregate": {
            "rmse_mean": summary.rmse_mean, "rmse_sd": summary.rmse_sd,
            "mape_mean": summary.mape_mean, "mape_sd": summary.mape_sd,
            "explained_variance_mean": summary.ev_mean, "explained_variance_sd": summary.ev_sd,
            "n_rows": summary.n_rows,
        },
    }
    files = ["cv_report.json"]
    atomic_write_text(os.path.join(out, "cv_report.json"), canonical_json(payload))
    if args.with_bootstrap:
        boots = evaluate.bootstrap_metrics(table, _ts_config(cp, args), _train_config(cp, args), plan)
        atomic_write_text(os.path.join(out, "bootstrap_report.json"), canonical_json(vars(boots)))
        files.append("bootstrap_report.json")
    _write_manifest(out, "eval", files, seed=plan.seed)
    print(f"seed: {plan.seed}")
    print(f"cv rmse {summary.rmse_mean:.2f} +- {summary.rmse_sd:.2f}, mape {summary.mape_mean:.4f}")
    return 0


def cmd_explain(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    bg, bg_seed = _background(ensemble, table, cp, args)

    if args.rows:
        idx = [_pick_row(table, rid.strip()) for rid in args.rows.split(",")]
    else:
        limit = args.limit if args.limit is not None else table.n
        idx = list(range(min(limit, table.n)))
    sample = table.select_rows(idx)
    atts = explain.shapley_batch(ensemble, sample, bg)
    preds = gbdt.predict_batch(ensemble, sample)

    names = ensemble.feature_names
    rows = []
    for att, pred, rid in zip(atts, preds, sample.row_ids):
        rows.append([rid, float(pred), att.phi0, *[float(v) for v in att.phi]])
    _write_csv(os.path.join(out, "attributions.csv"), ["row_id", "prediction", "phi0", *names], rows)

    ranked = explain.global_importance(atts, feature_names=names)
    _write_csv(os.path.join(out, "importance.csv"), ["feature", "mean_abs_phi"], ranked)
    _write_manifest(out, "explain", ["attributions.csv", "importance.csv"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    print(f"explained {len(rows)} rows against a background of {bg.size}")
    return 0


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    schema, target = _load_schema(args.schema)
    table = _load_clean_table(args, schema, target)
    wanted = [name.strip() for name in args.features.split(",")]
    cols = []
    for name in wanted:
        spec = table.spec_of(name)
        if spec.kind != "numeric":
            raise ValidationError(f"clustering feature {name!r} must be numeric")
        cols.append(table.columns[name].astype(float))
    points = np.column_stack(cols)

    dg = cluster_mod.agglomerate(points, metric=args.metric, linkage=args.linkage)
    labels = cluster_mod.cut(dg, args.k)
    rule = cluster_mod.SegmentRule(
        labels=tuple(args.segment_labels.split(",")),
        outlier_cutoff=args.cutoff,
    )
    assignment = cluster_mod.assign_segments(labels, table.target, rule)

    _write_csv(
        os.path.join(out, "merges.csv"),
        ["step", "node_a", "node_b", "height", "size"],
        [[i, a, b, h, s] for i, (a, b, h, s) in enumerate(dg.merges)],
    )
    _write_csv(
        os.path.join(out, "assignments.csv"),
        ["row_id", "cluster", "segment"],
        [
            [rid, int(lab), seg if seg is not None else ""]
            for rid, lab, seg in zip(table.row_ids, labels, assignment.segments)
        ],
    )
    seg_payload = {
        "cluster_medians": {str(c): m for c, m in assignment.cluster_medians.items()},
        "segment_of_cluster": {str(c): s for c, s in assignment.segment_of_cluster.items()},
        "dropped_clusters": list(assignment.dropped_clusters),
        "outlier_cutoff": args.cutoff,
    }
    atomic_write_text(os.path.join(out, "segments.json"), canonical_json(seg_payload))
    _write_manifest(out, "cluster", ["merges.csv", "assignments.csv", "segments.json"])
    print(f"cut {args.k} clusters; dropped {len(assignment.dropped_clusters)} above {args.cutoff:g}")
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    bg, bg_seed = _background(ensemble, table, cp, args)
    base = pricing.VehicleConfig(table.row(_pick_row(table, args.base)), label=args.base)
    variant = pricing.VehicleConfig(table.row(_pick_row(table, args.variant)), label=args.variant)
    report = pricing.compare(ensemble, base, variant, bg)
    payload = {
        "base": args.base,
        "variant": args.variant,
        "price_base": report.price_base,
        "price_variant": report.price_variant,
        "total_delta": report.total_delta,
        "lines": [
            {"feature": l.feature, "value_base": _fmt(l.value_base), "value_variant": _fmt(l.value_variant), "delta": l.delta}
            for l in report.lines
        ],
    }
    atomic_write_text(os.path.join(out, "compare.json"), canonical_json(payload))
    _write_manifest(out, "compare", ["compare.json"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    print(f"total delta {report.total_delta:+.2f}")
    return 0


def cmd_dependence(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    if args.limit is not None and args.limit < table.n:
        table = table.select_rows(range(args.limit))
    bg, bg_seed = _background(ensemble, table, cp, args)
    series = pricing.dependence(ensemble, table, args.feature, bg, with_interactions=args.with_interactions)
    payload = {
        "feature": series.feature,
        "strongest_interactor": series.strongest_interactor,
        "points": [
            {
                "row_id": rid,
                "value": _fmt(v),
                "phi": float(p),
                **({"main_effect": float(series.main_effects[i])} if series.main_effects is not None else {}),
            }
            for i, (rid, v, p) in enumerate(zip(table.row_ids, series.values, series.phi))
        ],
    }
    atomic_write_text(os.path.join(out, "dependence.json"), canonical_json(payload))
    _write_manifest(out, "dependence", ["dependence.json"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    if series.strongest_interactor:
        print(f"strongest interactor: {series.strongest_interactor}")
    return 0


def cmd_importance(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    if args.limit is not None and args.limit < table.n:
        table = table.select_rows(range(args.limit))
    bg, bg_seed = _background(ensemble, table, cp, args)
    atts = explain.shapley_batch(ensemble, table, bg)
    ranked = explain.global_importance(atts, feature_names=ensemble.feature_names)
    _write_csv(os.path.join(out, "importance.csv"), ["feature", "mean_abs_phi"], ranked)
    _write_manifest(out, "importance", ["importance.csv"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    print(f"top feature: {ranked[0][0]}")
    return 0


def cmd_trend(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    if args.limit is not None and args.limit < table.n:
        table = table.select_rows(range(args.limit))
    bg, bg_seed = _background(ensemble, table, cp, args)
    atts = explain.shapley_batch(ensemble, table, bg)
    years = table.columns[args.year_column]
    effects = pricing.trend(ensemble, atts, args.feature, years)
    _write_csv(
        os.path.join(out, "trend.csv"),
        ["year", "n", "mean_phi", "sd_phi"],
        [[e.group, e.n, e.mean_phi, e.sd_phi] for e in effects],
    )
    _write_manifest(out, "trend", ["trend.csv"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    return 0


def cmd_quote(args) -> int:
    out = _out_dir(args)
    cp = _read_ini(args.config)
    ensemble, schema, target = _model_schema_and_target(args)
    table = _load_clean_table(args, schema, target)
    bg, bg_seed = _background(ensemble, table, cp, args)
    baseline = pricing.VehicleConfig(table.row(_pick_row(table, args.baseline)), label=args.baseline)
    changes = {}
    for pair in args.set or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects feature=value, got {pair!r}")
        name, text = pair.split("=", 1)
        spec = next((s for s in ensemble.schema if s.name == name), None)
        if spec is None:
            raise ValidationError(f"model has no feature named {name!r}")
        changes[name] = _parse_value(spec, text)
    quote = pricing.scp_quote(ensemble, baseline, changes, bg)
    payload = {
        "baseline": args.baseline,
        "baseline_price": quote.baseline_price,
        "quoted_price": quote.quoted_price,
        "total_delta": quote.total_delta,
        "residual_delta": quote.residual_delta,
        "changes": [
            {"feature": l.feature, "from": _fmt(l.value_base), "to": _fmt(l.value_variant), "delta": l.delta}
            for l in quote.lines
        ],
    }
    atomic_write_text(os.path.join(out, "quote.json"), canonical_json(payload))
    _write_manifest(out, "quote", ["quote.json"], seed=bg_seed)
    print(f"seed: {bg_seed}")
    print(f"quoted price {quote.quoted_price:.2f} ({quote.total_delta:+.2f})")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_background_flags(p):
    p.add_argument("--background", type=int, default=None, help="background sample size (default 128)")
    p.add_argument("--background-seed", type=int, default=None, dest="background_seed")
    p.add_argument("--full-background", action="store_true", dest="full_background")
    p.add_argument("--config", default=None, help="INI config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="priceparts", description="Price modeling and component attribution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic market with ground truth")
    p.add_argument("--out", default=None)
    p.add_argument("--spec", default=None, help="market spec JSON (omit for the built-in demo market)")
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--noise-sd", type=float, default=None, dest="noise_sd")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate and clean a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--policy", choices=("drop-row", "impute"), default="drop-row")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit a boosted model")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--subsample", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("greedy", "ordered"), default=None)
    p.add_argument("--prior-weight", type=float, default=None, dest="prior_weight")
    p.add_argument("--permutations", type=int, default=None)
    p.add_argument("--encode-seed", type=int, default=None, dest="encode_seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="nested cross-validation (and optional bootstrap)")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-workers", type=int, default=None, dest="max_workers")
    p.add_argument("--bootstrap", type=int, default=None)
    p.add_argument("--with-bootstrap", action="store_true", dest="with_bootstrap")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="per-row attributions and global importance")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--rows", default=None, help="comma-separated row ids (default: all)")
    p.add_argument("--limit", type=int, default=None)
    _add_background_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("cluster", help="agglomerative segmentation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--features", required=True, help="comma-separated numeric features")
    p.add_argument("--metric", choices=cluster_mod.METRICS, default="standardized-euclidean")
    p.add_argument("--linkage", choices=cluster_mod.LINKAGES, default="average")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--cutoff", type=float, default=250_000.0)
    p.add_argument("--segment-labels", default="base,luxury", dest="segment_labels")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("compare", help="price two rows and difference their components")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--base", required=True)
    p.add_argument("--variant", required=True)
    _add_background_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dependence", help="attribution of one feature across rows")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--feature", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--with-interactions", action="store_true", dest="with_interactions")
    _add_background_flags(p)
    p.set_defaults(func=cmd_dependence)

    p = sub.add_parser("importance", help="global feature ranking by mean |phi|")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--limit", type=int, default=None)
    _add_background_flags(p)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("trend", help="feature attribution by model year")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--feature", required=True)
    p.add_argument("--year-column", required=True, dest="year_column")
    p.add_argument("--limit", type=int, default=None)
    _add_background_flags(p)
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("quote", help="price a configuration change")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--baseline", required=True, help="row id of the baseline vehicle")
    p.add_argument("--set", action="append", default=None, help="feature=value (repeatable)")
    _add_background_flags(p)
    p.set_defaults(func=cmd_quote)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PricePartsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
