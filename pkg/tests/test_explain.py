"""Interventional attributions: value function, exact/fast Shapley, interactions."""

import itertools
import math

import numpy as np
import pytest

from conftest import numeric_schema, random_ensemble, trivial_encoder
from priceparts import explain, gbdt
from priceparts.errors import ValidationError


def make_background(rng, ens, size):
    rows = rng.normal(0.0, 1.5, (size, ens.n_features))
    return explain.BackgroundSet(rows, ens.feature_names)


def value_oracle(ens, x, mask, bg):
    """Slow reference: compose row by row and average plain predictions."""
    total = 0.0
    for b in bg.rows:
        z = np.where(mask, x, b)
        total += gbdt.predict(ens, z)
    return total / len(bg.rows)


def permutation_shapley(ens, x, bg):
    """Independent oracle: average marginal contributions over all orderings."""
    m = ens.n_features
    values = {}

    def v(frozen):
        if frozen not in values:
            mask = np.zeros(m, dtype=bool)
            mask[list(frozen)] = True
            values[frozen] = explain.value_function(ens, x, mask, bg)
        return values[frozen]

    phi = np.zeros(m)
    for perm in itertools.permutations(range(m)):
        seen = frozenset()
        for i in perm:
            grown = seen | {i}
            phi[i] += v(grown) - v(seen)
            seen = grown
    return phi / math.factorial(m), v(frozenset())


# --- value function ---


def test_value_function_hand_routing():
    tree = gbdt.ObliviousTree(1, (0,), (1.0,), (-5.0, 5.0))
    ens = gbdt.Ensemble(10.0, 1.0, (tree,), numeric_schema(2), trivial_encoder(), 0, "t")
    bg = explain.BackgroundSet(np.array([[0.0, 9.0]]), ens.feature_names)
    x = np.array([2.0, -9.0])
    # mask selects feature 0 only: composite row is (2, 9) -> right leaf
    mask = np.array([True, False])
    assert explain.value_function(ens, x, mask, bg) == 15.0
    # empty mask: background row (0, 9) -> left leaf
    assert explain.value_function(ens, x, np.zeros(2, dtype=bool), bg) == 5.0


def test_value_function_full_mask_is_exact_prediction():
    rng = np.random.default_rng(8)
    ens = random_ensemble(rng, 4, 9, 3)
    bg = make_background(rng, ens, 3)  # 3 rows: a float mean would not be exact
    x = rng.normal(0.0, 1.0, 4)
    full = np.ones(4, dtype=bool)
    assert explain.value_function(ens, x, full, bg) == gbdt.predict(ens, x)


def test_value_function_matches_slow_composition():
    rng = np.random.default_rng(15)
    for _ in range(10):
        ens = random_ensemble(rng, 5, 6, 3)
        bg = make_background(rng, ens, 4)
        x = rng.normal(0.0, 1.0, 5)
        mask = rng.integers(0, 2, 5).astype(bool)
        got = explain.value_function(ens, x, mask, bg)
        assert got == pytest.approx(value_oracle(ens, x, mask, bg), abs=1e-12)


# --- exact Shapley ---


def test_exact_two_feature_hand_enumeration():
    tree = gbdt.ObliviousTree(2, (0, 1), (0.0, 0.0), (1.0, 2.0, 4.0, 8.0))
    ens = gbdt.Ensemble(0.0, 1.0, (tree,), numeric_schema(2), trivial_encoder(), 0, "t")
    bg = explain.BackgroundSet(np.array([[-1.0, -1.0]]), ens.feature_names)
    x = np.array([1.0, 1.0])
    # v({}) = 1, v({0}) = 4, v({1}) = 2, v({0,1}) = 8
    # phi_0 = 1/2 (4-1) + 1/2 (8-2) = 4.5 ; phi_1 = 1/2 (2-1) + 1/2 (8-4) = 2.5
    att = explain.shapley_exact(ens, x, bg)
    assert att.phi0 == 1.0
    assert att.phi == pytest.approx([4.5, 2.5], abs=1e-12)


def test_exact_matches_permutation_definition():
    rng = np.random.default_rng(23)
    for _ in range(8):
        m = int(rng.integers(2, 5))
        ens = random_ensemble(rng, m, int(rng.integers(1, 8)), int(rng.integers(1, 4)))
        bg = make_background(rng, ens, int(rng.integers(1, 5)))
        x = rng.normal(0.0, 1.0, m)
        att = explain.shapley_exact(ens, x, bg)
        want, base = permutation_shapley(ens, x, bg)
        assert att.phi == pytest.approx(want, abs=1e-10)
        assert att.phi0 == pytest.approx(base, abs=1e-12)


def test_exact_feature_cap():
    rng = np.random.default_rng(1)
    ens = random_ensemble(rng, 21, 2, 2)
    bg = make_background(rng, ens, 2)
    with pytest.raises(ValidationError, match="at most 20"):
        explain.shapley_exact(ens, rng.normal(0.0, 1.0, 21), bg)


# --- fast algorithm ---


def test_fast_matches_exact_randomized():
    rng = np.random.default_rng(40)
    worst = 0.0
    for _ in range(30):
        m = int(rng.integers(2, 12))
        ens = random_ensemble(rng, m, int(rng.integers(1, 30)), int(rng.integers(1, 5)))
        bg = make_background(rng, ens, int(rng.integers(1, 16)))
        x = rng.normal(0.0, 1.0, m)
        fast = explain.shapley_fast(ens, x, bg)
        exact = explain.shapley_exact(ens, x, bg)
        worst = max(worst, float(np.max(np.abs(fast.phi - exact.phi))))
        assert fast.phi0 == pytest.approx(exact.phi0, abs=1e-12)
    assert worst <= 1e-9


def test_fast_handles_duplicate_feature_levels():
    # one feature appearing at several levels of the same tree
    tree = gbdt.ObliviousTree(3, (0, 0, 1), (-0.5, 0.5, 0.0), tuple(float(i) for i in range(8)))
    ens = gbdt.Ensemble(2.0, 1.0, (tree,), numeric_schema(2), trivial_encoder(), 0, "t")
    rng = np.random.default_rng(3)
    bg = make_background(rng, ens, 6)
    x = np.array([0.0, 0.7])
    fast = explain.shapley_fast(ens, x, bg)
    exact = explain.shapley_exact(ens, x, bg)
    assert fast.phi == pytest.approx(exact.phi, abs=1e-12)


def test_batch_matches_single():
    rng = np.random.default_rng(19)
    ens = random_ensemble(rng, 6, 10, 3)
    bg = make_background(rng, ens, 8)
    X = rng.normal(0.0, 1.0, (12, 6))
    batch = explain.shapley_batch(ens, X, bg)
    assert len(batch) == 12
    for i, att in enumerate(batch):
        single = explain.shapley_fast(ens, X[i], bg)
        assert att.phi == pytest.approx(single.phi, abs=1e-12)
        assert att.phi0 == single.phi0


def test_batch_instance_ids():
    rng = np.random.default_rng(2)
    ens = random_ensemble(rng, 3, 2, 2)
    bg = make_background(rng, ens, 2)
    X = rng.normal(0.0, 1.0, (2, 3))
    atts = explain.shapley_batch(ens, X, bg, instance_ids=["a", "b"])
    assert [a.instance_id for a in atts] == ["a", "b"]


# --- axioms ---


def test_local_accuracy():
    rng = np.random.default_rng(31)
    for _ in range(40):
        m = int(rng.integers(1, 10))
        ens = random_ensemble(rng, m, int(rng.integers(1, 25)), int(rng.integers(1, 5)))
        bg = make_background(rng, ens, int(rng.integers(1, 20)))
        x = rng.normal(0.0, 1.0, m)
        att = explain.shapley_fast(ens, x, bg)
        assert att.phi0 + att.phi.sum() == pytest.approx(gbdt.predict(ens, x), abs=1e-9)


def test_missingness_unused_feature_is_exact_zero():
    rng = np.random.default_rng(37)
    for _ in range(20):
        m = int(rng.integers(3, 9))
        ens = random_ensemble(rng, m - 1, int(rng.integers(1, 15)), 3)
        # widen the schema by one feature no tree mentions
        wide = gbdt.Ensemble(ens.base_score, ens.learning_rate, ens.trees,
                             numeric_schema(m), trivial_encoder(), 0, "t")
        bg = make_background(rng, wide, 5)
        att = explain.shapley_fast(wide, rng.normal(0.0, 1.0, m), bg)
        assert att.phi[m - 1] == 0.0


def test_symmetry_mirrored_trees_exact():
    rng = np.random.default_rng(41)
    for _ in range(20):
        m = 4
        depth = int(rng.integers(1, 4))
        thr = tuple(float(v) for v in rng.normal(0.0, 1.0, depth))
        vals = tuple(float(v) for v in rng.normal(0.0, 10.0, 1 << depth))
        ta = gbdt.ObliviousTree(depth, (1,) * depth, thr, vals)
        tb = gbdt.ObliviousTree(depth, (3,) * depth, thr, vals)
        ens = gbdt.Ensemble(1.0, 0.8, (ta, tb), numeric_schema(m), trivial_encoder(), 0, "t")
        rows = rng.normal(0.0, 1.0, (6, m))
        rows[:, 3] = rows[:, 1]  # background symmetric in the mirrored pair
        x = rng.normal(0.0, 1.0, m)
        x[3] = x[1]
        att = explain.shapley_fast(ens, x, explain.BackgroundSet(rows, ens.feature_names))
        assert att.phi[1] == att.phi[3]


def test_symmetry_swapped_levels_exact():
    vals = tuple(float(v) for v in np.random.default_rng(5).normal(0.0, 10.0, 4))
    t1 = gbdt.ObliviousTree(2, (1, 3), (0.2, 0.2), vals)
    t2 = gbdt.ObliviousTree(2, (3, 1), (0.2, 0.2), vals)
    ens = gbdt.Ensemble(0.0, 1.0, (t1, t2), numeric_schema(4), trivial_encoder(), 0, "t")
    rng = np.random.default_rng(6)
    rows = rng.normal(0.0, 1.0, (5, 4))
    rows[:, 3] = rows[:, 1]
    x = rng.normal(0.0, 1.0, 4)
    x[3] = x[1]
    att = explain.shapley_fast(ens, x, explain.BackgroundSet(rows, ens.feature_names))
    assert att.phi[1] == att.phi[3]


def test_linearity_of_summed_ensembles():
    rng = np.random.default_rng(43)
    for _ in range(20):
        m = int(rng.integers(2, 7))
        lr = float(rng.uniform(0.3, 1.0))
        g = random_ensemble(rng, m, int(rng.integers(1, 10)), 3, lr=lr)
        h = random_ensemble(rng, m, int(rng.integers(1, 10)), 3, lr=lr)
        combined = gbdt.Ensemble(g.base_score + h.base_score, lr, g.trees + h.trees,
                                 numeric_schema(m), trivial_encoder(), 0, "t")
        bg_rows = rng.normal(0.0, 1.0, (7, m))
        bg = explain.BackgroundSet(bg_rows, g.feature_names)
        x = rng.normal(0.0, 1.0, m)
        phi_g = explain.shapley_fast(g, x, bg).phi
        phi_h = explain.shapley_fast(h, x, bg).phi
        phi_sum = explain.shapley_fast(combined, x, bg).phi
        assert phi_sum == pytest.approx(phi_g + phi_h, abs=1e-9)


# --- interactions ---


def brute_force_interactions(ens, x, bg):
    """Pairwise values straight from the second-difference definition."""
    m = ens.n_features
    cache = {}

    def v(frozen):
        if frozen not in cache:
            mask = np.zeros(m, dtype=bool)
            mask[list(frozen)] = True
            cache[frozen] = explain.value_function(ens, x, mask, bg)
        return cache[frozen]

    out = np.zeros((m, m))
    rest = lambda i, j: [k for k in range(m) if k not in (i, j)]
    for i in range(m):
        for j in range(i + 1, m):
            total = 0.0
            others = rest(i, j)
            for r in range(len(others) + 1):
                for combo in itertools.combinations(others, r):
                    s = frozenset(combo)
                    w = (math.factorial(r) * math.factorial(m - 2 - r)) / (2.0 * math.factorial(m - 1))
                    delta = v(s | {i, j}) - v(s | {i}) - v(s | {j}) + v(s)
                    total += w * delta
            out[i, j] = out[j, i] = total
    phi = np.zeros(m)
    for i in range(m):
        t = 0.0
        for r in range(m):
            for combo in itertools.combinations([k for k in range(m) if k != i], r):
                s = frozenset(combo)
                w = (math.factorial(r) * math.factorial(m - 1 - r)) / math.factorial(m)
                t += w * (v(s | {i}) - v(s))
        phi[i] = t
    for i in range(m):
        out[i, i] = phi[i] - (out[i].sum() - out[i, i])
    return out


def test_interactions_match_brute_force():
    rng = np.random.default_rng(51)
    for _ in range(6):
        m = int(rng.integers(2, 5))
        ens = random_ensemble(rng, m, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        bg = make_background(rng, ens, int(rng.integers(1, 4)))
        x = rng.normal(0.0, 1.0, m)
        got = explain.shapley_interactions(ens, x, bg)
        want = brute_force_interactions(ens, x, bg)
        assert got.values == pytest.approx(want, abs=1e-9)


def test_interaction_symmetry_exact():
    rng = np.random.default_rng(53)
    for _ in range(10):
        m = int(rng.integers(2, 8))
        ens = random_ensemble(rng, m, int(rng.integers(1, 12)), 3)
        bg = make_background(rng, ens, 4)
        got = explain.shapley_interactions(ens, rng.normal(0.0, 1.0, m), bg)
        assert np.array_equal(got.values, got.values.T)


def test_interaction_rows_sum_to_phi():
    rng = np.random.default_rng(59)
    for _ in range(10):
        m = int(rng.integers(2, 8))
        ens = random_ensemble(rng, m, int(rng.integers(1, 12)), 3)
        bg = make_background(rng, ens, 5)
        x = rng.normal(0.0, 1.0, m)
        inter = explain.shapley_interactions(ens, x, bg)
        phi = explain.shapley_exact(ens, x, bg).phi
        assert inter.values.sum(axis=1) == pytest.approx(phi, abs=1e-9)


def test_interaction_grand_total():
    rng = np.random.default_rng(61)
    for _ in range(10):
        m = int(rng.integers(2, 8))
        ens = random_ensemble(rng, m, int(rng.integers(1, 12)), 3)
        bg = make_background(rng, ens, 5)
        x = rng.normal(0.0, 1.0, m)
        inter = explain.shapley_interactions(ens, x, bg)
        assert inter.values.sum() == pytest.approx(gbdt.predict(ens, x) - inter.phi0, abs=1e-9)


def test_additive_ensemble_off_diagonals_exactly_zero():
    # every tree touches a single feature, so no pair can interact
    rng = np.random.default_rng(67)
    m = 5
    trees = []
    for j in range(m):
        depth = 2
        thr = tuple(float(v) for v in rng.normal(0.0, 1.0, depth))
        vals = tuple(float(v) for v in rng.normal(0.0, 8.0, 1 << depth))
        trees.append(gbdt.ObliviousTree(depth, (j, j), thr, vals))
    ens = gbdt.Ensemble(3.0, 0.5, tuple(trees), numeric_schema(m), trivial_encoder(), 0, "t")
    bg = make_background(rng, ens, 6)
    inter = explain.shapley_interactions(ens, rng.normal(0.0, 1.0, m), bg)
    off = inter.values[~np.eye(m, dtype=bool)]
    assert np.all(off == 0.0)


def test_pure_product_interaction_is_nonzero_and_symmetric():
    # leaf pattern realizes x0 AND x1: only the (1,1) leaf pays out
    tree = gbdt.ObliviousTree(2, (0, 1), (0.5, 0.5), (0.0, 0.0, 0.0, 100.0))
    ens = gbdt.Ensemble(0.0, 1.0, (tree,), numeric_schema(2), trivial_encoder(), 0, "t")
    bg = explain.BackgroundSet(np.array([[0.0, 0.0], [1.0, 1.0]]), ens.feature_names)
    inter = explain.shapley_interactions(ens, np.array([1.0, 1.0]), bg)
    assert inter.values[0, 1] != 0.0
    assert inter.values[0, 1] == inter.values[1, 0]


def test_interactions_batch_matches_single():
    rng = np.random.default_rng(71)
    ens = random_ensemble(rng, 4, 6, 3)
    bg = make_background(rng, ens, 4)
    X = rng.normal(0.0, 1.0, (5, 4))
    batch = explain.interactions_batch(ens, X, bg)
    for i, im in enumerate(batch):
        one = explain.shapley_interactions(ens, X[i], bg)
        assert im.values == pytest.approx(one.values, abs=1e-12)


def test_interaction_feature_cap():
    rng = np.random.default_rng(3)
    ens = random_ensemble(rng, 17, 2, 2)
    bg = make_background(rng, ens, 2)
    with pytest.raises(ValidationError, match="at most 16"):
        explain.shapley_interactions(ens, rng.normal(0.0, 1.0, 17), bg)


# --- background and importance ---


def test_background_from_table_reproducible_and_clamped():
    from priceparts import dataset, encode

    spec = dataset.demo_market_spec(n_rows=40, seed=2)
    table, _ = dataset.generate_synthetic_market(spec)
    model = gbdt.fit_model(table, encode.TargetStatisticsConfig(prior_weight=1.0),
                           gbdt.TrainConfig(iterations=4, depth=2))
    a = explain.BackgroundSet.from_table(model, table, size=12, seed=9)
    b = explain.BackgroundSet.from_table(model, table, size=12, seed=9)
    assert np.array_equal(a.rows, b.rows)
    assert a.rows.shape == (12, model.n_features)
    big = explain.BackgroundSet.from_table(model, table, size=999, seed=9)
    assert big.rows.shape[0] == 40
    full = explain.BackgroundSet.from_table(model, table, full=True)
    assert full.rows.shape[0] == 40


def test_background_requires_rows():
    with pytest.raises(ValidationError):
        explain.BackgroundSet(np.empty((0, 3)), ("a", "b", "c"))


def test_global_importance_hand_case():
    a1 = explain.AttributionVector(0.0, np.array([10.0, 1.0]), "i1")
    a2 = explain.AttributionVector(0.0, np.array([-10.0, 1.0]), "i2")
    ranked = explain.global_importance([a1, a2], feature_names=("power", "nav"))
    assert ranked == [("power", 10.0), ("nav", 1.0)]


def test_global_importance_tie_breaks_by_feature_order():
    a = explain.AttributionVector(0.0, np.array([2.0, 2.0]), None)
    ranked = explain.global_importance([a], feature_names=("z_first", "a_second"))
    assert ranked == [("z_first", 2.0), ("a_second", 2.0)]
