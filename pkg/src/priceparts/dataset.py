"""Tabular data handling: typed tables, file IO, cleaning, synthetic market generation.

A table holds one row per vehicle listing: feature columns (numeric, categorical,
boolean), a strictly positive price target, and stable row identifiers. Files are
delimiter-separated text with a header row; an empty field is a missing value and
the decimal separator is ".".
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

KINDS = ("numeric", "categorical", "boolean")
ROW_ID_COLUMN = "row_id"

_TRUE_WORDS = frozenset({"true", "1"})
_FALSE_WORDS = frozenset({"false", "0"})


@dataclass(frozen=True)
class FeatureSpec:
    """Declares one feature column: its name, kind, and optional unit label."""

    name: str
    kind: str
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown feature kind {self.kind!r} for {self.name!r}; expected one of {KINDS}")
        if not self.name or self.name == ROW_ID_COLUMN:
            raise SchemaError(f"invalid feature name {self.name!r}")


@dataclass(frozen=True)
class Table:
    """Immutable column store with schema, target, and row identifiers.

    Numeric columns are float64 with NaN marking a missing cell; categorical and
    boolean columns are object arrays with None marking a missing cell.
    """

    schema: tuple[FeatureSpec, ...]
    columns: dict[str, np.ndarray]
    target: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        names = [f.name for f in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        n = len(self.target)
        if len(self.row_ids) != n:
            raise SchemaError("row_ids length does not match target length")
        if len(set(self.row_ids)) != n:
            raise SchemaError("row_ids must be unique")
        for spec in self.schema:
            if spec.name not in self.columns:
                raise SchemaError(f"column {spec.name!r} declared but not provided")
            if len(self.columns[spec.name]) != n:
                raise SchemaError(f"column {spec.name!r} has wrong length")
        present = self.target[~np.isnan(self.target)]
        if present.size and present.min() <= 0:
            raise ValidationError("target prices must be strictly positive")

    @property
    def n(self) -> int:
        return len(self.target)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.schema)

    def spec_of(self, name: str) -> FeatureSpec:
        for spec in self.schema:
            if spec.name == name:
                return spec
        raise SchemaError(f"no feature named {name!r}")

    def has_missing(self) -> bool:
        for spec in self.schema:
            col = self.columns[spec.name]
            if spec.kind == "numeric":
                if np.isnan(col.astype(float)).any():
                    return True
            elif any(v is None for v in col):
                return True
        return bool(np.isnan(self.target).any())

    def to_matrix(self) -> np.ndarray:
        """Feature matrix in schema order; requires every column to be numeric."""
        cols = []
        for spec in self.schema:
            if spec.kind != "numeric":
                raise SchemaError(f"column {spec.name!r} is {spec.kind}, not numeric")
            cols.append(np.asarray(self.columns[spec.name], dtype=np.float64))
        if not cols:
            return np.empty((self.n, 0), dtype=np.float64)
        return np.column_stack(cols)

    def row(self, i: int) -> dict:
        """Feature values of row i as a plain mapping (no target)."""
        out = {}
        for spec in self.schema:
            v = self.columns[spec.name][i]
            out[spec.name] = None if _is_missing(v, spec.kind) else v
        return out

    def select_rows(self, indices: Sequence[int] | np.ndarray) -> "Table":
        idx = np.asarray(indices, dtype=np.intp)
        cols = {s.name: self.columns[s.name][idx] for s in self.schema}
        ids = tuple(self.row_ids[i] for i in idx)
        return Table(schema=self.schema, columns=cols, target=self.target[idx], row_ids=ids)

    def equals(self, other: "Table") -> bool:
        if self.schema != other.schema or self.row_ids != other.row_ids:
            return False
        if not np.array_equal(self.target, other.target, equal_nan=True):
            return False
        for spec in self.schema:
            a, b = self.columns[spec.name], other.columns[spec.name]
            if spec.kind == "numeric":
                if not np.array_equal(a.astype(float), b.astype(float), equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True


def _is_missing(value, kind: str) -> bool:
    if kind == "numeric":
        return isinstance(value, float) and np.isnan(value)
    return value is None


def _parse_cell(text: str, spec: FeatureSpec, row: int):
    if text == "":
        return np.nan if spec.kind == "numeric" else None
    if spec.kind == "numeric":
        try:
            value = float(text)
        except ValueError:
            raise ParseError(f"cannot parse {text!r} as a number", row=row, column=spec.name) from None
        if not np.isfinite(value):
            raise ParseError(f"non-finite value {text!r}", row=row, column=spec.name)
        return value
    if spec.kind == "boolean":
        word = text.strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ParseError(f"cannot parse {text!r} as a boolean", row=row, column=spec.name)
    return text


def load_table(
    path,
    schema: Sequence[FeatureSpec],
    *,
    target_column: str = "price",
    delimiter: str = ",",
) -> Table:
    """Read a delimited text file into a Table.

    The header must contain every schema column plus the target column; a
    ``row_id`` column is used for identifiers when present, otherwise sequential
    ids are assigned. Extra columns are ignored.
    """
    schema = tuple(schema)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        rows = list(reader)
    return _table_from_rows(header, rows, schema, target_column, str(path))


def loads_table(text: str, schema: Sequence[FeatureSpec], *, target_column: str = "price", delimiter: str = ",") -> Table:
    """Same as load_table but reads from a string (handy for tests and pipes)."""
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = next(reader)
    return _table_from_rows(header, list(reader), tuple(schema), target_column, "<string>")


def _table_from_rows(header, rows, schema, target_column, origin) -> Table:
    index = {name: i for i, name in enumerate(header)}
    missing = [s.name for s in schema if s.name not in index]
    if target_column not in index:
        missing.append(target_column)
    if missing:
        raise SchemaError(f"{origin}: missing column(s) {', '.join(repr(m) for m in missing)}")

    n = len(rows)
    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", row=r)

    columns: dict[str, np.ndarray] = {}
    for spec in schema:
        j = index[spec.name]
        values = [_parse_cell(rows[r][j], spec, r) for r in range(n)]
        dtype = np.float64 if spec.kind == "numeric" else object
        columns[spec.name] = np.array(values, dtype=dtype)

    tj = index[target_column]
    target_spec = FeatureSpec(name="__target__", kind="numeric")
    target = np.array(
        [np.nan if rows[r][tj] == "" else _parse_cell(rows[r][tj], target_spec, r) for r in range(n)],
        dtype=np.float64,
    )

    if ROW_ID_COLUMN in index:
        rj = index[ROW_ID_COLUMN]
        row_ids = tuple(rows[r][rj] for r in range(n))
    else:
        row_ids = tuple(f"r{r:06d}" for r in range(n))
    return Table(schema=schema, columns=columns, target=target, row_ids=row_ids)


def _format_cell(value, kind: str) -> str:
    if _is_missing(value, kind):
        return ""
    if kind == "numeric":
        return repr(float(value))
    if kind == "boolean":
        return "true" if value else "false"
    return str(value)


def write_table(table: Table, path, *, target_column: str = "price", delimiter: str = ",") -> None:
    """Write a Table so that load_table reads back a bit-identical copy."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow([ROW_ID_COLUMN, *table.feature_names, target_column])
    for i in range(table.n):
        cells = [table.row_ids[i]]
        for spec in table.schema:
            cells.append(_format_cell(table.columns[spec.name][i], spec.kind))
        t = table.target[i]
        cells.append("" if np.isnan(t) else repr(float(t)))
        writer.writerow(cells)
    from ._util import atomic_write_text

    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Cleaning


def clean(table: Table, policy: str = "drop-row") -> Table:
    """Resolve missing cells.

    ``drop-row`` removes any row with a missing cell. ``impute`` fills numeric
    gaps with the column median and categorical/boolean gaps with the most
    frequent value (ties resolved to the smallest); rows with a missing target
    are dropped under either policy since targets are never invented.
    """
    if policy not in ("drop-row", "impute"):
        raise ValidationError(f"unknown cleaning policy {policy!r}")

    keep = ~np.isnan(table.target)
    if policy == "drop-row":
        for spec in table.schema:
            col = table.columns[spec.name]
            if spec.kind == "numeric":
                keep &= ~np.isnan(col.astype(float))
            else:
                keep &= np.array([v is not None for v in col], dtype=bool)
        return table.select_rows(np.flatnonzero(keep))

    out = table.select_rows(np.flatnonzero(keep))
    columns = {}
    for spec in out.schema:
        col = out.columns[spec.name]
        if spec.kind == "numeric":
            col = col.astype(float)
            hole = np.isnan(col)
            if hole.all():
                raise ValidationError(f"column {spec.name!r} has no observed values to impute from")
            if hole.any():
                col = np.where(hole, np.median(col[~hole]), col)
            columns[spec.name] = col
        else:
            present = [v for v in col if v is not None]
            if not present:
                raise ValidationError(f"column {spec.name!r} has no observed values to impute from")
            counts: dict = {}
            for v in present:
                counts[v] = counts.get(v, 0) + 1
            top = max(counts.values())
            fill = sorted(v for v, c in counts.items() if c == top)[0]
            columns[spec.name] = np.array([fill if v is None else v for v in col], dtype=object)
    return Table(schema=out.schema, columns=columns, target=out.target, row_ids=out.row_ids)


# ---------------------------------------------------------------------------
# Synthetic market generation


@dataclass(frozen=True)
class NumericFeature:
    """Uniform numeric feature contributing coefficient * (value - center)."""

    name: str
    low: float
    high: float
    coefficient: float
    center: float = 0.0
    unit: str | None = None

    def __post_init__(self):
        if self.low > self.high:
            raise ValidationError(f"{self.name!r}: low must not exceed high")


@dataclass(frozen=True)
class CategoricalFeature:
    """Discrete feature with one price offset per level."""

    name: str
    levels: tuple[str, ...]
    offsets: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValidationError(f"{self.name!r}: need at least two levels")
        if len(self.levels) != len(self.offsets):
            raise ValidationError(f"{self.name!r}: levels and offsets must align")
        if self.weights is not None:
            if len(self.weights) != len(self.levels) or min(self.weights) < 0:
                raise ValidationError(f"{self.name!r}: bad level weights")


@dataclass(frozen=True)
class BooleanFeature:
    """Binary option adding true_offset when present."""

    name: str
    true_offset: float
    p_true: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_true < 1.0:
            raise ValidationError(f"{self.name!r}: p_true must be inside (0, 1)")


@dataclass(frozen=True)
class Interaction:
    """Pairwise term between two features.

    For numeric/boolean pairs the term is coefficient * a * b where numeric
    sides are centered and boolean sides are 0/1 indicators. When one side is
    categorical, level_coefficients supplies a per-level multiplier applied to
    the other side; two categorical sides are not supported.
    """

    a: str
    b: str
    coefficient: float = 0.0
    level_coefficients: Mapping[str, float] | None = None


@dataclass(frozen=True)
class SyntheticMarketSpec:
    n_rows: int
    base_price: float
    numeric: tuple[NumericFeature, ...] = ()
    categorical: tuple[CategoricalFeature, ...] = ()
    boolean: tuple[BooleanFeature, ...] = ()
    interactions: tuple[Interaction, ...] = ()
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValidationError("n_rows must be at least 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be non-negative")
        names = [f.name for f in self.numeric + self.categorical + self.boolean]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate feature names in market spec")
        kinds = {f.name: "numeric" for f in self.numeric}
        kinds.update({f.name: "categorical" for f in self.categorical})
        kinds.update({f.name: "boolean" for f in self.boolean})
        for inter in self.interactions:
            for side in (inter.a, inter.b):
                if side not in kinds:
                    raise ValidationError(f"interaction references unknown feature {side!r}")
            if kinds[inter.a] == "categorical" and kinds[inter.b] == "categorical":
                raise ValidationError(f"interaction {inter.a!r}*{inter.b!r}: two categorical sides unsupported")
            cat_side = kinds[inter.a] == "categorical" or kinds[inter.b] == "categorical"
            if cat_side and inter.level_coefficients is None:
                raise ValidationError(f"interaction {inter.a!r}*{inter.b!r}: level_coefficients required")

    @property
    def schema(self) -> tuple[FeatureSpec, ...]:
        specs = [FeatureSpec(f.name, "numeric", f.unit) for f in self.numeric]
        specs += [FeatureSpec(f.name, "categorical") for f in self.categorical]
        specs += [FeatureSpec(f.name, "boolean") for f in self.boolean]
        return tuple(specs)


@dataclass(frozen=True)
class GroundTruth:
    """Per-row additive decomposition of the generated price.

    Each row's price equals base_price + sum of term columns + noise, with the
    sum taken in stored term order. Contribution queries are centered against
    the term's population mean so they are comparable with attributions
    measured against an average vehicle.
    """

    row_ids: tuple[str, ...]
    base_price: float
    term_names: tuple[str, ...]
    term_features: tuple[tuple[str, ...], ...]
    terms: np.ndarray  # (n_rows, n_terms)
    noise: np.ndarray

    def term_means(self) -> np.ndarray:
        return self.terms.mean(axis=0)

    def reference_price(self) -> float:
        """Price of the average vehicle: base plus every term's mean."""
        return float(self.base_price + self.term_means().sum())

    def centered(self, term_name: str) -> np.ndarray:
        j = self.term_names.index(term_name)
        col = self.terms[:, j]
        return col - col.mean()

    def main_contribution(self, feature: str) -> np.ndarray:
        """Centered contribution of a feature's main-effect term."""
        for j, feats in enumerate(self.term_features):
            if feats == (feature,):
                col = self.terms[:, j]
                return col - col.mean()
        raise ValidationError(f"no main-effect term for feature {feature!r}")


def generate_synthetic_market(spec: SyntheticMarketSpec) -> tuple[Table, GroundTruth]:
    """Draw a reproducible market and the exact decomposition behind each price."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    columns: dict[str, np.ndarray] = {}
    term_names: list[str] = []
    term_features: list[tuple[str, ...]] = []
    term_cols: list[np.ndarray] = []

    centered_numeric: dict[str, np.ndarray] = {}
    for f in spec.numeric:
        values = rng.uniform(f.low, f.high, size=n)
        columns[f.name] = values
        centered_numeric[f.name] = values - f.center
        term_names.append(f.name)
        term_features.append((f.name,))
        term_cols.append(f.coefficient * centered_numeric[f.name])

    level_values: dict[str, np.ndarray] = {}
    for f in spec.categorical:
        weights = None
        if f.weights is not None:
            w = np.asarray(f.weights, dtype=float)
            weights = w / w.sum()
        drawn = rng.choice(len(f.levels), size=n, p=weights)
        columns[f.name] = np.array([f.levels[k] for k in drawn], dtype=object)
        level_values[f.name] = drawn
        offsets = np.asarray(f.offsets, dtype=float)
        term_names.append(f.name)
        term_features.append((f.name,))
        term_cols.append(offsets[drawn])

    indicator: dict[str, np.ndarray] = {}
    for f in spec.boolean:
        on = rng.random(n) < f.p_true
        columns[f.name] = np.array([bool(v) for v in on], dtype=object)
        indicator[f.name] = on.astype(float)
        term_names.append(f.name)
        term_features.append((f.name,))
        term_cols.append(f.true_offset * indicator[f.name])

    def _side(name: str) -> np.ndarray:
        if name in centered_numeric:
            return centered_numeric[name]
        if name in indicator:
            return indicator[name]
        raise ValidationError(f"{name!r} is categorical; swap it into level_coefficients position")

    for inter in spec.interactions:
        cat_name = None
        for fdef in spec.categorical:
            if fdef.name in (inter.a, inter.b):
                cat_name = fdef.name
                levels = fdef.levels
        if cat_name is None:
            term = inter.coefficient * _side(inter.a) * _side(inter.b)
        else:
            other = inter.b if inter.a == cat_name else inter.a
            coef_by_level = np.array([float(inter.level_coefficients.get(lv, 0.0)) for lv in levels])
            term = coef_by_level[level_values[cat_name]] * _side(other)
        term_names.append(f"{inter.a}*{inter.b}")
        term_features.append((inter.a, inter.b))
        term_cols.append(term)

    noise = rng.normal(0.0, spec.noise_sd, size=n) if spec.noise_sd > 0 else np.zeros(n)

    target = np.full(n, float(spec.base_price))
    for col in term_cols:
        target = target + col
    target = target + noise

    table = Table(
        schema=spec.schema,
        columns=columns,
        target=target,
        row_ids=tuple(f"r{i:06d}" for i in range(n)),
    )
    terms = np.column_stack(term_cols) if term_cols else np.empty((n, 0))
    truth = GroundTruth(
        row_ids=table.row_ids,
        base_price=float(spec.base_price),
        term_names=tuple(term_names),
        term_features=tuple(term_features),
        terms=terms,
        noise=noise,
    )
    return table, truth


def write_ground_truth(truth: GroundTruth, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([ROW_ID_COLUMN, "base", *truth.term_names, "noise"])
    for i, rid in enumerate(truth.row_ids):
        cells = [rid, repr(truth.base_price)]
        cells += [repr(float(v)) for v in truth.terms[i]]
        cells.append(repr(float(truth.noise[i])))
        writer.writerow(cells)
    from ._util import atomic_write_text

    atomic_write_text(path, buf.getvalue())


def demo_market_spec(n_rows: int = 5000, noise_sd: float = 300.0, seed: int = 11) -> SyntheticMarketSpec:
    """A mid-size vehicle market: 10 numeric, 5 categorical, 3 boolean features,
    three pairwise interactions, and additive Gaussian pricing noise."""
    return SyntheticMarketSpec(
        n_rows=n_rows,
        base_price=16000.0,
        numeric=(
            NumericFeature("engine_power", 70, 400, 28.0, center=100, unit="hp"),
            NumericFeature("curb_weight", 2400, 5600, 1.8, center=2500, unit="lb"),
            NumericFeature("wheel_diameter", 14, 22, 130.0, center=14, unit="in"),
            NumericFeature("length", 150, 230, 12.0, center=150, unit="in"),
            NumericFeature("width", 65, 82, 24.0, center=65, unit="in"),
            NumericFeature("height", 53, 78, -25.0, center=65, unit="in"),
            NumericFeature("model_year", 1994, 2024, 45.0, center=1990),
            NumericFeature("city_mpg", 14, 50, 35.0, center=25, unit="mpg"),
            NumericFeature("torque", 90, 500, 4.0, center=100, unit="lb-ft"),
            NumericFeature("gear_count", 4, 10, 160.0, center=5),
        ),
        categorical=(
            CategoricalFeature("make_tier", ("economy", "midrange", "premium", "flagship"),
                               (-1800.0, 0.0, 2500.0, 7000.0), weights=(0.3, 0.4, 0.2, 0.1)),
            CategoricalFeature("transmission", ("manual", "auto", "cvt", "dct"),
                               (-700.0, 0.0, 300.0, 1100.0), weights=(0.15, 0.55, 0.2, 0.1)),
            CategoricalFeature("drivetrain", ("fwd", "rwd", "awd"), (0.0, 900.0, 2200.0),
                               weights=(0.55, 0.2, 0.25)),
            CategoricalFeature("fuel", ("gas", "diesel", "hybrid"), (0.0, 800.0, 2600.0),
                               weights=(0.7, 0.1, 0.2)),
            CategoricalFeature("body", ("compact", "sedan", "suv", "pickup", "minivan"),
                               (-1200.0, 0.0, 1500.0, 2100.0, 600.0),
                               weights=(0.2, 0.3, 0.3, 0.12, 0.08)),
        ),
        boolean=(
            BooleanFeature("turbo", 1500.0, p_true=0.4),
            BooleanFeature("nav_system", 900.0, p_true=0.5),
            BooleanFeature("leather_seats", 1200.0, p_true=0.45),
        ),
        interactions=(
            Interaction("turbo", "engine_power", coefficient=4.0),
            Interaction("body", "turbo",
                        level_coefficients={"compact": -200.0, "sedan": 0.0, "suv": 350.0,
                                            "pickup": 800.0, "minivan": -400.0}),
            Interaction("nav_system", "model_year", coefficient=-20.0),
        ),
        noise_sd=noise_sd,
        seed=seed,
    )


def market_spec_from_mapping(raw: Mapping) -> SyntheticMarketSpec:
    """Build a market spec from parsed JSON (the CLI's --spec file)."""
    try:
        return SyntheticMarketSpec(
            n_rows=int(raw["n_rows"]),
            base_price=float(raw["base_price"]),
            numeric=tuple(
                NumericFeature(d["name"], float(d["low"]), float(d["high"]), float(d["coefficient"]),
                               center=float(d.get("center", 0.0)), unit=d.get("unit"))
                for d in raw.get("numeric", ())
            ),
            categorical=tuple(
                CategoricalFeature(d["name"], tuple(d["levels"]), tuple(float(v) for v in d["offsets"]),
                                   weights=tuple(float(v) for v in d["weights"]) if d.get("weights") else None)
                for d in raw.get("categorical", ())
            ),
            boolean=tuple(
                BooleanFeature(d["name"], float(d["true_offset"]), p_true=float(d.get("p_true", 0.5)))
                for d in raw.get("boolean", ())
            ),
            interactions=tuple(
                Interaction(d["a"], d["b"], coefficient=float(d.get("coefficient", 0.0)),
                            level_coefficients=d.get("level_coefficients"))
                for d in raw.get("interactions", ())
            ),
            noise_sd=float(raw.get("noise_sd", 0.0)),
            seed=int(raw.get("seed", 0)),
        )
    except KeyError as exc:
        raise ValidationError(f"market spec missing required key {exc.args[0]!r}") from None
