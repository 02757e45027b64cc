"""Interventional Shapley attributions for boosted oblivious trees.

The coalition game behind every function here is

    v(S) = mean over background rows b of F(compose(x, b, S))

where compose takes feature values from the instance x inside the coalition S
and from the background row outside it. Attributions use the Shapley weights
|S|! (M - |S| - 1)! / M!, so phi_0 (the mean background prediction) plus the
per-feature phi values reconstructs F(x).

Two evaluation strategies are provided. ``shapley_exact`` enumerates all 2**M
coalitions with memoized v(S) and is the reference implementation for small M.
``shapley_fast`` walks each (tree, background row) pair once: for every leaf it
derives the feature sets that must be inside (U) or outside (V) the coalition
for the composite to land there, and adds the closed-form weight

    +value * (u-1)! v! / (u+v)!   to each feature in U,
    -value * u! (v-1)! / (u+v)!   to each feature in V,

averaged over the background. Trees never touching a feature contribute
nothing to it, so unused features get an exact 0.0.

``shapley_interactions`` returns the pairwise decomposition with weights
|S|! (M - |S| - 2)! / (2 (M-1)!) applied to the discrete second difference,
computed per tree over just the features that tree uses. Off-diagonal entries
for feature pairs never co-occurring in a tree are exact zeros, diagonals are
phi_i minus the row's off-diagonal sum, and the whole matrix is symmetric by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import encode
from .dataset import Table
from .errors import ValidationError
from .gbdt import Ensemble, predict, predict_batch

EXACT_MAX_FEATURES = 20
INTERACTION_MAX_FEATURES = 16
DEFAULT_BACKGROUND_SIZE = 128


@dataclass(frozen=True)
class BackgroundSet:
    """Reference population the do-operator draws out-of-coalition values from."""

    rows: np.ndarray  # (B, M), already encoded to numeric
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ValidationError("background needs at least one row")
        if self.rows.shape[1] != len(self.feature_names):
            raise ValidationError("background width does not match feature names")

    @property
    def size(self) -> int:
        return int(self.rows.shape[0])

    @staticmethod
    def from_table(
        ensemble: Ensemble,
        table: Table,
        *,
        size: int = DEFAULT_BACKGROUND_SIZE,
        seed: int = 0,
        full: bool = False,
    ) -> "BackgroundSet":
        """Sample background rows from a table (encoded with the model's encoder).

        Uses every row when ``full`` is set or the table is smaller than
        ``size``; otherwise a uniform sample without replacement, reproducible
        from the seed.
        """
        if any(s.kind != "numeric" for s in table.schema):
            table = encode.apply(ensemble.encoder, table)
        X = table.to_matrix()
        if not full and X.shape[0] > size:
            keep = np.sort(np.random.default_rng(seed).choice(X.shape[0], size=size, replace=False))
            X = X[keep]
        return BackgroundSet(rows=X, feature_names=ensemble.feature_names)


@dataclass(frozen=True)
class AttributionVector:
    """Additive per-feature price decomposition of one prediction."""

    phi0: float
    phi: np.ndarray
    instance_id: str | None = None

    def total(self) -> float:
        return float(self.phi0 + self.phi.sum())


@dataclass(frozen=True)
class InteractionMatrix:
    """Pairwise decomposition: diagonal holds main effects, rows sum to phi."""

    phi0: float
    values: np.ndarray  # (M, M)
    instance_id: str | None = None

    def row_totals(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def total(self) -> float:
        return float(self.phi0 + self.values.sum())


def _as_vector(ensemble: Ensemble, x) -> np.ndarray:
    if isinstance(x, Mapping):
        return encode.encode_row(ensemble.encoder, ensemble.schema, x)
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != (ensemble.n_features,):
        raise ValidationError(f"expected {ensemble.n_features} feature values, got shape {vec.shape}")
    return vec


def _as_rows(ensemble: Ensemble, data) -> np.ndarray:
    if isinstance(data, Table):
        if any(s.kind != "numeric" for s in data.schema):
            data = encode.apply(ensemble.encoder, data)
        return data.to_matrix()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.n_features:
        raise ValidationError(f"expected a (n, {ensemble.n_features}) matrix, got shape {X.shape}")
    return X


def value_function(ensemble: Ensemble, x, mask, background: BackgroundSet) -> float:
    """v(S): mean prediction over composites taking x inside the mask, background outside."""
    vec = _as_vector(ensemble, x)
    sel = np.asarray(mask, dtype=bool)
    if sel.shape != (ensemble.n_features,):
        raise ValidationError(f"mask must have length {ensemble.n_features}")
    if sel.all():
        return predict(ensemble, vec)  # composites all equal x, skip the replacement
    composites = np.where(sel[None, :], vec[None, :], background.rows)
    return float(predict_batch(ensemble, composites).mean())


def _baseline(ensemble: Ensemble, background: BackgroundSet) -> float:
    return float(predict_batch(ensemble, background.rows).mean())


# ---------------------------------------------------------------------------
# Exact enumeration


def shapley_exact(ensemble: Ensemble, x, background: BackgroundSet, *, instance_id: str | None = None) -> AttributionVector:
    """Reference attribution by full coalition enumeration (M <= 20).

    Memoizes v(S) for all 2**M coalitions, then applies the Shapley weights
    directly. Cost grows as 2**M * B, so keep this for verification and small
    feature counts; shapley_fast gives the same numbers in polynomial time.
    """
    M = ensemble.n_features
    if M > EXACT_MAX_FEATURES:
        raise ValidationError(
            f"exact enumeration supports at most {EXACT_MAX_FEATURES} features (got {M}); use shapley_fast"
        )
    vec = _as_vector(ensemble, x)
    B = background.size
    n_masks = 1 << M
    bits = ((np.arange(n_masks)[:, None] >> np.arange(M)[None, :]) & 1).astype(bool)

    # One batched prediction over every (coalition, background row) composite.
    composites = np.where(bits[:, None, :], vec[None, None, :], background.rows[None, :, :])
    flat = composites.reshape(n_masks * B, M)
    v = predict_batch(ensemble, flat).reshape(n_masks, B).mean(axis=1)

    sizes = bits.sum(axis=1)
    fact = [math.factorial(k) for k in range(M + 1)]
    weight_by_size = np.array([fact[s] * fact[M - s - 1] / fact[M] for s in range(M)])

    phi = np.zeros(M)
    ids = np.arange(n_masks)
    for i in range(M):
        without = ids[~bits[:, i]]
        phi[i] = float(np.dot(weight_by_size[sizes[without]], v[without | (1 << i)] - v[without]))
    return AttributionVector(phi0=float(v[0]), phi=phi, instance_id=instance_id)


# ---------------------------------------------------------------------------
# Fast per-tree attribution


def _leaf_bit_table(depth: int) -> np.ndarray:
    codes = np.arange(1 << depth)
    return ((codes[:, None] >> np.arange(depth - 1, -1, -1)[None, :]) & 1).astype(bool)


def _weight_tables(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """W_in[u, v] = (u-1)! v! / (u+v)!  and  W_out[u, v] = u! (v-1)! / (u+v)!."""
    size = depth + 1
    w_in = np.zeros((size, size))
    w_out = np.zeros((size, size))
    for u in range(size):
        for v in range(size):
            if u + v == 0 or u + v > depth:
                continue
            denom = math.factorial(u + v)
            if u >= 1:
                w_in[u, v] = math.factorial(u - 1) * math.factorial(v) / denom
            if v >= 1:
                w_out[u, v] = math.factorial(u) * math.factorial(v - 1) / denom
    return w_in, w_out


def _fast_phi_matrix(ensemble: Ensemble, X: np.ndarray, background: BackgroundSet) -> np.ndarray:
    """Per-feature attributions for every row of X, vectorized tree by tree."""
    N, M = X.shape
    phi = np.zeros((N, M))
    if not ensemble.trees or N == 0:
        return phi
    feats, thrs, vals = ensemble._stacked
    depth = ensemble.trees[0].depth
    leaf_bits = _leaf_bit_table(depth)  # (L, D)
    w_in, w_out = _weight_tables(depth)
    R = background.rows

    for k in range(feats.shape[0]):
        f_k, t_k, v_k = feats[k], thrs[k], vals[k]
        x_bits = X[:, f_k] > t_k  # (N, D)
        r_bits = R[:, f_k] > t_k  # (B, D)

        # Instances sharing a routing pattern share attributions for this tree.
        codes = (x_bits.astype(np.int64) << np.arange(depth - 1, -1, -1)).sum(axis=1)
        u_codes, inverse = np.unique(codes, return_inverse=True)
        ub = leaf_bits[u_codes]  # (U, D) bit pattern of each unique instance route

        x_match = leaf_bits[None, :, :] == ub[:, None, :]  # (U, L, D)
        r_match = leaf_bits[None, :, :] == r_bits[:, None, :]  # (B, L, D)
        nx = x_match[:, None, :, :]  # (U, 1, L, D)
        nr = r_match[None, :, :, :]  # (1, B, L, D)
        dead = (~nx & ~nr).any(axis=3)  # (U, B, L)

        unique_feats = np.unique(f_k)
        need_in = []
        need_out = []
        for g in unique_feats:
            ds = np.flatnonzero(f_k == g)
            need_in.append((nx[..., ds] & ~nr[..., ds]).any(axis=3))
            need_out.append((~nx[..., ds] & nr[..., ds]).any(axis=3))
        conflict = np.zeros_like(dead)
        for a, b in zip(need_in, need_out):
            conflict |= a & b
        reach = ~dead & ~conflict
        u_cnt = np.zeros(dead.shape, dtype=np.int16)
        v_cnt = np.zeros(dead.shape, dtype=np.int16)
        for a, b in zip(need_in, need_out):
            u_cnt += a
            v_cnt += b

        for g, a, b in zip(unique_feats, need_in, need_out):
            w = np.where(reach & a, w_in[u_cnt, v_cnt], 0.0)
            w -= np.where(reach & b, w_out[u_cnt, v_cnt], 0.0)
            contrib = w * v_k[None, None, :]  # (U, B, L)
            # canonical leaf order before reducing keeps mirrored trees bit-identical
            per_row = np.sort(contrib, axis=2).sum(axis=2).mean(axis=1)  # (U,)
            phi[:, g] += per_row[inverse]
    return phi * ensemble.learning_rate


def shapley_fast(ensemble: Ensemble, x, background: BackgroundSet, *, instance_id: str | None = None) -> AttributionVector:
    """Exact interventional attribution in O(trees * leaves * background)."""
    vec = _as_vector(ensemble, x)
    phi = _fast_phi_matrix(ensemble, vec[None, :], background)[0]
    return AttributionVector(phi0=_baseline(ensemble, background), phi=phi, instance_id=instance_id)


def shapley_batch(
    ensemble: Ensemble,
    data,
    background: BackgroundSet,
    *,
    instance_ids: Sequence[str] | None = None,
) -> list[AttributionVector]:
    """shapley_fast over many rows, sharing all per-tree work."""
    X = _as_rows(ensemble, data)
    if instance_ids is None and isinstance(data, Table):
        instance_ids = data.row_ids
    if instance_ids is not None and len(instance_ids) != X.shape[0]:
        raise ValidationError("instance_ids length does not match rows")
    phi0 = _baseline(ensemble, background)
    phi = _fast_phi_matrix(ensemble, X, background)
    return [
        AttributionVector(phi0=phi0, phi=phi[i], instance_id=None if instance_ids is None else instance_ids[i])
        for i in range(X.shape[0])
    ]


# ---------------------------------------------------------------------------
# Pairwise interactions


def _popcounts(ids: np.ndarray, width: int) -> np.ndarray:
    return ((ids[:, None] >> np.arange(width)[None, :]) & 1).sum(axis=1)


def _interaction_tensors(ensemble: Ensemble, X: np.ndarray, background: BackgroundSet) -> tuple[np.ndarray, np.ndarray]:
    """Returns (phi (N, M), pair (N, M, M) off-diagonal interactions), unscaled diagonals."""
    N, M = X.shape
    phi = np.zeros((N, M))
    pair = np.zeros((N, M, M))
    if not ensemble.trees or N == 0:
        return phi, pair
    feats, thrs, vals = ensemble._stacked
    depth = ensemble.trees[0].depth
    full_mask = (1 << depth) - 1
    shifts = np.arange(depth - 1, -1, -1)
    R = background.rows

    for k in range(feats.shape[0]):
        f_k, t_k, v_k = feats[k], thrs[k], vals[k]
        x_code = ((X[:, f_k] > t_k).astype(np.int64) << shifts).sum(axis=1)  # (N,)
        r_code = ((R[:, f_k] > t_k).astype(np.int64) << shifts).sum(axis=1)  # (B,)
        carrier = np.unique(f_k)
        f = carrier.size

        # Level mask of each coalition over the carrier: which tree levels read x.
        level_bit = 1 << shifts  # level d contributes bit 2**(D-1-d)
        feature_levels = np.array([np.where(f_k == g, level_bit, 0).sum() for g in carrier], dtype=np.int64)
        subsets = np.arange(1 << f)
        sub_bits = ((subsets[:, None] >> np.arange(f)[None, :]) & 1).astype(bool)
        lmask = (sub_bits * feature_levels[None, :]).sum(axis=1)  # (2**f,)

        x_codes_u, inverse = np.unique(x_code, return_inverse=True)
        leaf = (x_codes_u[:, None] & lmask[None, :])[:, :, None] | (r_code[None, None, :] & ~lmask[None, :, None] & full_mask)
        v = v_k[leaf].mean(axis=2)  # (U, 2**f)

        fact = [math.factorial(i) for i in range(f + 1)]
        w_single = np.array([fact[s] * fact[f - 1 - s] / fact[f] for s in range(f)])
        ids = subsets
        sizes = _popcounts(ids, f)

        for pi in range(f):
            without = ids[~sub_bits[:, pi]]
            delta = v[:, without | (1 << pi)] - v[:, without]
            phi[:, carrier[pi]] += (delta @ w_single[sizes[without]])[inverse]

        if f >= 2:
            w_pair = np.array([fact[s] * fact[f - 2 - s] / (2 * fact[f - 1]) for s in range(f - 1)])
            for pi in range(f):
                for pj in range(pi + 1, f):
                    both_off = ids[~sub_bits[:, pi] & ~sub_bits[:, pj]]
                    bi, bj = 1 << pi, 1 << pj
                    second = (
                        v[:, both_off | bi | bj]
                        - v[:, both_off | bi]
                        - v[:, both_off | bj]
                        + v[:, both_off]
                    )
                    val = (second @ w_pair[sizes[both_off]])[inverse]
                    gi, gj = carrier[pi], carrier[pj]
                    pair[:, gi, gj] += val
                    pair[:, gj, gi] += val
    return phi * ensemble.learning_rate, pair * ensemble.learning_rate


def interactions_batch(
    ensemble: Ensemble,
    data,
    background: BackgroundSet,
    *,
    instance_ids: Sequence[str] | None = None,
) -> list[InteractionMatrix]:
    """Pairwise interaction matrices for many rows at once."""
    X = _as_rows(ensemble, data)
    M = X.shape[1]
    if M > INTERACTION_MAX_FEATURES:
        raise ValidationError(f"interaction matrices support at most {INTERACTION_MAX_FEATURES} features (got {M})")
    if instance_ids is None and isinstance(data, Table):
        instance_ids = data.row_ids
    if instance_ids is not None and len(instance_ids) != X.shape[0]:
        raise ValidationError("instance_ids length does not match rows")
    phi0 = _baseline(ensemble, background)
    phi, pair = _interaction_tensors(ensemble, X, background)
    out = []
    for i in range(X.shape[0]):
        values = pair[i].copy()
        off_diag = values.sum(axis=1)
        np.fill_diagonal(values, phi[i] - off_diag)
        out.append(InteractionMatrix(phi0=phi0, values=values, instance_id=None if instance_ids is None else instance_ids[i]))
    return out


def shapley_interactions(ensemble: Ensemble, x, background: BackgroundSet, *, instance_id: str | None = None) -> InteractionMatrix:
    """Pairwise interaction matrix for one instance (M <= 16)."""
    vec = _as_vector(ensemble, x)
    return interactions_batch(ensemble, vec[None, :], background, instance_ids=None if instance_id is None else [instance_id])[0]


# ---------------------------------------------------------------------------
# Aggregation


def global_importance(
    attributions: Sequence[AttributionVector],
    feature_names: Sequence[str] | None = None,
) -> list[tuple[str | int, float]]:
    """Mean |phi| per feature, sorted descending (ties keep feature order)."""
    if not attributions:
        raise ValidationError("need at least one attribution vector")
    M = len(attributions[0].phi)
    if any(len(a.phi) != M for a in attributions):
        raise ValidationError("attribution vectors have inconsistent widths")
    stack = np.stack([a.phi for a in attributions])
    scores = np.abs(stack).mean(axis=0)
    order = np.lexsort((np.arange(M), -scores))
    if feature_names is None:
        return [(int(j), float(scores[j])) for j in order]
    if len(feature_names) != M:
        raise ValidationError("feature_names length does not match attributions")
    return [(feature_names[j], float(scores[j])) for j in order]
