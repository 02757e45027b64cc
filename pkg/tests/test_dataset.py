"""Tables, CSV parsing, cleaning, and the synthetic market generator."""

import numpy as np
import pytest

from priceparts import dataset
from priceparts.dataset import (
    BooleanFeature,
    CategoricalFeature,
    FeatureSpec,
    Interaction,
    NumericFeature,
    SyntheticMarketSpec,
    Table,
)
from priceparts.errors import ParseError, SchemaError, ValidationError

SCHEMA = (
    FeatureSpec("size", "numeric"),
    FeatureSpec("color", "categorical"),
    FeatureSpec("turbo", "boolean"),
)


def make_table(sizes, colors, turbos, prices, ids=None):
    n = len(prices)
    ids = ids or tuple(f"r{i}" for i in range(n))
    cols = {
        "size": np.asarray(sizes, dtype=np.float64),
        "color": np.asarray(colors, dtype=object),
        "turbo": np.asarray(turbos, dtype=object),
    }
    return Table(SCHEMA, cols, np.asarray(prices, dtype=np.float64), tuple(ids))


def test_loads_table_parses_all_kinds():
    csv = (
        "row_id,size,color,turbo,price\n"
        "a,1.5,red,true,100\n"
        "b,2.5,blue,false,200\n"
    )
    t = dataset.loads_table(csv, SCHEMA)
    assert t.n == 2
    assert t.row_ids == ("a", "b")
    assert np.array_equal(t.columns["size"], [1.5, 2.5])
    assert list(t.columns["color"]) == ["red", "blue"]
    assert list(t.columns["turbo"]) == [True, False]
    assert np.array_equal(t.target, [100.0, 200.0])


def test_loads_table_boolean_words():
    csv = "row_id,size,color,turbo,price\na,1,x,1,10\nb,2,y,0,20\n"
    t = dataset.loads_table(csv, SCHEMA)
    assert list(t.columns["turbo"]) == [True, False]


def test_loads_table_rejects_bad_number_with_location():
    csv = "row_id,size,color,turbo,price\na,oops,red,true,100\n"
    with pytest.raises(ParseError, match=r"row 0.*'size'"):
        dataset.loads_table(csv, SCHEMA)


def test_loads_table_rejects_bad_boolean():
    csv = "row_id,size,color,turbo,price\na,1,red,maybe,100\n"
    with pytest.raises(ParseError):
        dataset.loads_table(csv, SCHEMA)


def test_loads_table_rejects_non_finite():
    csv = "row_id,size,color,turbo,price\na,inf,red,true,100\n"
    with pytest.raises(ParseError):
        dataset.loads_table(csv, SCHEMA)


def test_loads_table_missing_column_is_schema_error():
    csv = "row_id,size,price\na,1,100\n"
    with pytest.raises(SchemaError, match="color"):
        dataset.loads_table(csv, SCHEMA)


def test_loads_table_duplicate_row_ids_rejected():
    csv = "row_id,size,color,turbo,price\na,1,red,true,100\na,2,blue,false,200\n"
    with pytest.raises(SchemaError, match="unique"):
        dataset.loads_table(csv, SCHEMA)


def test_table_rejects_nonpositive_present_price():
    with pytest.raises(ValidationError):
        make_table([1.0], ["red"], [True], [0.0])
    with pytest.raises(ValidationError):
        make_table([1.0], ["red"], [True], [-5.0])


def test_empty_cells_become_missing():
    csv = "row_id,size,color,turbo,price\na,,red,true,100\nb,2,,false,200\n"
    t = dataset.loads_table(csv, SCHEMA)
    assert np.isnan(t.columns["size"][0])
    assert t.columns["color"][1] is None
    assert t.has_missing()


def test_round_trip_through_csv(tmp_path):
    t = make_table([1.25, 2.5], ["red", "blue"], [True, False], [100.0, 212.5])
    path = tmp_path / "t.csv"
    dataset.write_table(t, path)
    back = dataset.load_table(path, SCHEMA)
    assert back.equals(t)


def test_round_trip_preserves_awkward_floats(tmp_path):
    vals = [0.1, 1.0 / 3.0, 1e-17 + 2.0, 12345.678901234567]
    t = make_table(vals, ["a", "b", "c", "d"], [True] * 4, [1.0, 2.0, 3.0, 4.0])
    path = tmp_path / "t.csv"
    dataset.write_table(t, path)
    back = dataset.load_table(path, SCHEMA)
    assert np.array_equal(back.columns["size"], t.columns["size"])


def test_select_rows_and_row():
    t = make_table([1, 2, 3], ["a", "b", "c"], [True, False, True], [10, 20, 30])
    sub = t.select_rows([2, 0])
    assert sub.row_ids == ("r2", "r0")
    assert list(sub.columns["color"]) == ["c", "a"]
    row = t.row(1)
    assert row["size"] == 2.0 and row["color"] == "b" and row["turbo"] is False


def test_clean_drop_row():
    csv = (
        "row_id,size,color,turbo,price\n"
        "a,1,red,true,100\n"
        "b,,blue,false,200\n"
        "c,3,,true,300\n"
    )
    t = dataset.clean(dataset.loads_table(csv, SCHEMA), "drop-row")
    assert t.row_ids == ("a",)
    assert not t.has_missing()


def test_clean_impute_median_and_mode():
    # median of [1, 1, 10] is 1 (mean would be 4)
    csv = (
        "row_id,size,color,turbo,price\n"
        "a,1,red,true,100\n"
        "b,1,red,true,100\n"
        "c,10,blue,false,100\n"
        "d,,blue,false,100\n"
    )
    t = dataset.clean(dataset.loads_table(csv, SCHEMA), "impute")
    assert t.columns["size"][3] == 1.0


def test_clean_impute_mode_tie_breaks_smallest():
    csv = "row_id,size,color,turbo,price\na,1,red,true,1\nb,2,blue,false,1\nc,3,,true,1\n"
    t = dataset.clean(dataset.loads_table(csv, SCHEMA), "impute")
    assert t.columns["color"][2] == "blue"


def test_clean_impute_drops_missing_target_rows():
    csv = "row_id,size,color,turbo,price\na,1,red,true,\nb,2,blue,false,200\n"
    t = dataset.clean(dataset.loads_table(csv, SCHEMA), "impute")
    assert t.row_ids == ("b",)


def test_clean_impute_all_missing_column_errors():
    csv = "row_id,size,color,turbo,price\na,,red,true,100\nb,,blue,false,200\n"
    with pytest.raises(ValidationError):
        dataset.clean(dataset.loads_table(csv, SCHEMA), "impute")


def test_clean_unknown_policy():
    t = make_table([1.0], ["red"], [True], [100.0])
    with pytest.raises(ValidationError):
        dataset.clean(t, "zero-fill")


def test_to_matrix_requires_numeric():
    t = make_table([1.0], ["red"], [True], [100.0])
    with pytest.raises(SchemaError):
        t.to_matrix()


# --- synthetic market ---


def test_generator_single_feature_hand_value():
    # noiseless: price = 1000 + 10 * value, ground-truth term = coefficient * (value - center)
    spec = SyntheticMarketSpec(
        n_rows=1,
        base_price=1000.0,
        numeric=(NumericFeature("x", 5.0, 5.0, 10.0, center=0.0),),
        noise_sd=0.0,
        seed=0,
    )
    table, truth = dataset.generate_synthetic_market(spec)
    assert table.columns["x"][0] == 5.0
    assert table.target[0] == pytest.approx(1050.0, abs=1e-9)
    assert truth.terms[0, truth.term_names.index("x")] == pytest.approx(50.0, abs=1e-9)


def test_generator_price_equals_decomposition():
    spec = dataset.demo_market_spec(n_rows=200, seed=4)
    table, truth = dataset.generate_synthetic_market(spec)
    rebuilt = truth.base_price + truth.terms.sum(axis=1) + truth.noise
    assert np.allclose(rebuilt, table.target, atol=1e-9)
    assert truth.row_ids == table.row_ids


def test_generator_boolean_premium_is_planted_offset():
    spec = SyntheticMarketSpec(
        n_rows=500,
        base_price=5000.0,
        boolean=(BooleanFeature("nav", 900.0, 0.5),),
        noise_sd=0.0,
        seed=3,
    )
    table, truth = dataset.generate_synthetic_market(spec)
    col = np.asarray(table.columns["nav"], dtype=bool)
    j = truth.term_names.index("nav")
    assert np.all(truth.terms[col, j] == 900.0)
    assert np.all(truth.terms[~col, j] == 0.0)


def test_generator_categorical_levels_and_offsets():
    spec = SyntheticMarketSpec(
        n_rows=400,
        base_price=9000.0,
        categorical=(CategoricalFeature("tier", ("lo", "hi"), (0.0, 2500.0), (0.5, 0.5)),),
        noise_sd=0.0,
        seed=9,
    )
    table, truth = dataset.generate_synthetic_market(spec)
    col = np.asarray(table.columns["tier"], dtype=object)
    j = truth.term_names.index("tier")
    assert set(col.tolist()) == {"lo", "hi"}
    assert np.all(truth.terms[col == "hi", j] == 2500.0)
    assert np.all(truth.terms[col == "lo", j] == 0.0)


def test_generator_interaction_terms():
    spec = SyntheticMarketSpec(
        n_rows=300,
        base_price=1000.0,
        numeric=(NumericFeature("power", 50.0, 100.0, 0.0, center=50.0),),
        boolean=(BooleanFeature("turbo", 0.0, 0.5),),
        interactions=(Interaction("turbo", "power", coefficient=2.0),),
        noise_sd=0.0,
        seed=5,
    )
    table, truth = dataset.generate_synthetic_market(spec)
    turbo = np.asarray(table.columns["turbo"], dtype=bool)
    power = np.asarray(table.columns["power"], dtype=np.float64)
    j = truth.term_names.index("turbo*power")
    # the numeric side is centered the same way as its main effect
    expect = np.where(turbo, 2.0 * (power - 50.0), 0.0)
    assert np.allclose(truth.terms[:, j], expect, atol=1e-9)


def test_generator_deterministic_and_seed_sensitive():
    spec = dataset.demo_market_spec(n_rows=100, seed=8)
    a, _ = dataset.generate_synthetic_market(spec)
    b, _ = dataset.generate_synthetic_market(spec)
    assert a.equals(b)
    other, _ = dataset.generate_synthetic_market(dataset.demo_market_spec(n_rows=100, seed=9))
    assert not np.array_equal(a.target, other.target)


def test_generator_noise_scale():
    spec = dataset.demo_market_spec(n_rows=4000, noise_sd=300.0, seed=2)
    _, truth = dataset.generate_synthetic_market(spec)
    assert abs(truth.noise.std() - 300.0) < 20.0
    noiseless = dataset.demo_market_spec(n_rows=10, noise_sd=0.0, seed=2)
    _, t0 = dataset.generate_synthetic_market(noiseless)
    assert np.all(t0.noise == 0.0)


def test_ground_truth_helpers():
    spec = dataset.demo_market_spec(n_rows=150, seed=6)
    _, truth = dataset.generate_synthetic_market(spec)
    ref = truth.reference_price()
    assert ref == pytest.approx(truth.base_price + truth.term_means().sum())
    main = truth.main_contribution("engine_power")
    assert main.mean() == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValidationError):
        truth.main_contribution("no_such_feature")


def test_market_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticMarketSpec(n_rows=0, base_price=1000.0)
    with pytest.raises(ValidationError):
        SyntheticMarketSpec(n_rows=10, base_price=1000.0, noise_sd=-1.0)
    with pytest.raises(ValidationError):
        NumericFeature("x", 10.0, 5.0, 1.0)  # low > high
    with pytest.raises(ValidationError):
        BooleanFeature("b", 100.0, 1.5)
    with pytest.raises(ValidationError):
        CategoricalFeature("c", ("a",), (1.0, 2.0), (1.0,))  # offsets misaligned


def test_market_spec_from_mapping():
    raw = {
        "n_rows": 40,
        "base_price": 8000.0,
        "seed": 12,
        "noise_sd": 0.0,
        "numeric": [{"name": "power", "low": 50.0, "high": 150.0, "coefficient": 12.0, "center": 50.0}],
        "categorical": [{"name": "tier", "levels": ["lo", "hi"], "offsets": [0.0, 1000.0]}],
        "boolean": [{"name": "nav", "true_offset": 300.0, "p_true": 0.4}],
        "interactions": [{"a": "nav", "b": "power", "coefficient": 1.5}],
    }
    spec = dataset.market_spec_from_mapping(raw)
    direct = SyntheticMarketSpec(
        n_rows=40,
        base_price=8000.0,
        seed=12,
        noise_sd=0.0,
        numeric=(NumericFeature("power", 50.0, 150.0, 12.0, center=50.0),),
        categorical=(CategoricalFeature("tier", ("lo", "hi"), (0.0, 1000.0)),),
        boolean=(BooleanFeature("nav", 300.0, 0.4),),
        interactions=(Interaction("nav", "power", coefficient=1.5),),
    )
    ta, _ = dataset.generate_synthetic_market(spec)
    tb, _ = dataset.generate_synthetic_market(direct)
    assert ta.equals(tb)
    with pytest.raises(ValidationError, match="n_rows"):
        dataset.market_spec_from_mapping({"base_price": 1.0})


def test_write_ground_truth(tmp_path):
    spec = dataset.demo_market_spec(n_rows=20, seed=1)
    _, truth = dataset.generate_synthetic_market(spec)
    path = tmp_path / "gt.csv"
    dataset.write_ground_truth(truth, path)
    text = path.read_text()
    header = text.splitlines()[0].split(",")
    assert header[0] == "row_id"
    assert "noise" in header
    assert len(text.splitlines()) == 21
