"""Shared builders for the test suite."""

import numpy as np
import pytest

from priceparts import encode, gbdt
from priceparts.dataset import FeatureSpec, Table


def numeric_schema(m):
    return tuple(FeatureSpec(f"f{j}", "numeric") for j in range(m))


def trivial_encoder(prior=0.0):
    return encode.EncoderState(
        prior=prior, prior_weight=0.0, mode="greedy", seed=0, n_permutations=1, features={},
    )


def numeric_table(X, y, row_ids=None):
    """Wrap a float matrix and target vector in a Table."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = X.shape
    if row_ids is None:
        row_ids = tuple(f"r{i}" for i in range(n))
    schema = numeric_schema(m)
    cols = {f"f{j}": X[:, j].copy() for j in range(m)}
    return Table(schema, cols, y, tuple(row_ids))


def random_tree(rng, m, depth, scale=10.0):
    features = tuple(int(v) for v in rng.integers(0, m, depth))
    thresholds = tuple(float(v) for v in rng.normal(0.0, 1.0, depth))
    leaves = tuple(float(v) for v in rng.normal(0.0, scale, 1 << depth))
    return gbdt.ObliviousTree(depth, features, thresholds, leaves)


def random_ensemble(rng, m, n_trees, depth, *, base=None, lr=None):
    """A synthetic ensemble with random splits, for oracle comparisons."""
    if base is None:
        base = float(rng.normal(0.0, 5.0))
    if lr is None:
        lr = float(rng.uniform(0.2, 1.0))
    trees = tuple(random_tree(rng, m, depth) for _ in range(n_trees))
    return gbdt.Ensemble(
        base_score=base,
        learning_rate=lr,
        trees=trees,
        schema=numeric_schema(m),
        encoder=trivial_encoder(base),
        seed=0,
        config_hash="test",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
