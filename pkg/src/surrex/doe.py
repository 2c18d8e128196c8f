"""Latin-hypercube designs over mixed spaces, nested LHS and a maximin polish."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from surrex.errors import DataContractError
from surrex.space import CATEGORICAL, CONTINUOUS, DesignMatrix, DesignSpace, VariableSpec


def stratum_index(x: np.ndarray, lo: float, hi: float, m: int) -> np.ndarray:
    """Index of the equal-width stratum of [lo, hi] holding each value (hi maps to m-1)."""
    k = np.floor((np.asarray(x, dtype=float) - lo) / (hi - lo) * m).astype(int)
    return np.clip(k, 0, m - 1)


def _place(var: VariableSpec, strata: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform point inside each requested stratum of ``var`` at resolution ``m``."""
    lo, hi = float(var.lo), float(var.hi)
    width = (hi - lo) / m
    u = rng.random(len(strata))
    x = lo + (strata + u) * width
    # rounding can push a draw across a stratum edge; fall back to the midpoint there
    bad = stratum_index(x, lo, hi, m) != strata
    x[bad] = lo + (strata[bad] + 0.5) * width
    return np.clip(x, lo, hi)


def _spread_pick(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Choose ``count`` distinct entries of ``pool``, one per equal slice of it."""
    if count == 0:
        return pool[:0]
    edges = np.ceil(np.arange(count + 1) * len(pool) / count).astype(int)
    picks = [rng.integers(edges[i], edges[i + 1]) for i in range(count)]
    return pool[np.array(picks)]


def balanced_levels(k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Level indices in random order where each of the k levels appears floor(m/k) or ceil(m/k) times."""
    base, extra = divmod(m, k)
    counts = np.full(k, base)
    counts[_spread_pick(np.arange(k), extra, rng)] += 1
    return rng.permutation(np.repeat(np.arange(k), counts))


def _levels_to_values(var: VariableSpec, idx: np.ndarray) -> np.ndarray:
    return var.level_values()[idx]


def lhs_sample(space: DesignSpace, m: int, seed: int) -> DesignMatrix:
    """Random Latin hypercube of ``m`` points.

    Continuous columns get one point per equal-width stratum; integer and
    categorical columns get balanced level counts.
    """
    if m < 1:
        raise DataContractError("lhs_sample needs m >= 1")
    rng = np.random.default_rng(seed)
    X = np.empty((m, space.n))
    for j, var in enumerate(space.variables):
        if var.kind == CONTINUOUS:
            X[:, j] = _place(var, rng.permutation(m), m, rng)
        else:
            X[:, j] = _levels_to_values(var, balanced_levels(var.n_levels, m, rng))
    return DesignMatrix(space, X, seed)


def nested_lhs(
    space: DesignSpace, m_outer: int, m_inner: int, seed: int
) -> tuple[DesignMatrix, list[int]]:
    """An ``m_outer``-point LHS whose first ``m_inner`` rows are themselves an LHS.

    Each inner point sits in one of the ``m_outer / m_inner`` sub-strata of
    its coarse stratum; the unused sub-strata are filled by new points.
    """
    if m_inner < 1 or m_outer < 1:
        raise DataContractError("nested_lhs needs positive sizes")
    if m_outer % m_inner:
        raise DataContractError(f"m_inner={m_inner} must divide m_outer={m_outer}")
    r = m_outer // m_inner
    n_new = m_outer - m_inner
    rng = np.random.default_rng(seed)
    X = np.empty((m_outer, space.n))
    for j, var in enumerate(space.variables):
        if var.kind == CONTINUOUS:
            coarse = rng.permutation(m_inner)
            fine = coarse * r + rng.integers(0, r, size=m_inner)
            free = np.setdiff1d(np.arange(m_outer), fine)
            X[:m_inner, j] = _place(var, fine, m_outer, rng)
            X[m_inner:, j] = _place(var, rng.permutation(free), m_outer, rng)
        else:
            k = var.n_levels
            inner = balanced_levels(k, m_inner, rng)
            have = np.bincount(inner, minlength=k)
            base, extra = divmod(m_outer, k)
            target = np.full(k, base)
            needy = np.flatnonzero(have > base)
            others = np.setdiff1d(np.arange(k), needy)
            target[needy] += 1
            target[_spread_pick(others, extra - len(needy), rng)] += 1
            new = np.repeat(np.arange(k), target - have)
            X[:m_inner, j] = _levels_to_values(var, inner)
            X[m_inner:, j] = _levels_to_values(var, rng.permutation(new))
    assert X.shape[0] == m_inner + n_new
    inner_rows = list(range(m_inner))
    return DesignMatrix(space, X, seed, {"inner_row_indices": inner_rows}), inner_rows


def _row_sq_dists(Z: np.ndarray, cat: np.ndarray, i: int) -> np.ndarray:
    diff = Z - Z[i]
    d = (diff[:, ~cat] ** 2).sum(1)
    if cat.any():
        d += (diff[:, cat] != 0).sum(1)
    d[i] = np.inf
    return d


def min_pairwise_distance(space: DesignSpace, X: np.ndarray) -> float:
    """Smallest normalised distance between two distinct rows (inf for one row)."""
    Z = space.normalize(X)
    cat = space.categorical_mask()
    if Z.shape[0] < 2:
        return float("inf")
    return float(np.sqrt(min(_row_sq_dists(Z, cat, i).min() for i in range(Z.shape[0]))))


def maximin_improve(
    design: DesignMatrix,
    iters: int,
    seed: int,
    groups: Sequence[Sequence[int]] | None = None,
) -> DesignMatrix:
    """Within-column swaps that never lower the minimum pairwise distance.

    Swapping two entries of one column keeps every column's multiset, so
    stratification survives. ``groups`` restricts swaps to rows of the same
    group, which keeps a nested subset intact.
    """
    X = design.values.copy()
    m = X.shape[0]
    if iters <= 0 or m < 2:
        return DesignMatrix(design.space, X, design.seed, dict(design.meta))
    if groups is None:
        groups = [list(range(m))]
    groups = [np.asarray(g, dtype=int) for g in groups if len(g) >= 2]
    if not groups:
        return DesignMatrix(design.space, X, design.seed, dict(design.meta))
    sizes = np.array([len(g) for g in groups], dtype=float)
    weights = sizes * (sizes - 1)
    weights /= weights.sum()

    rng = np.random.default_rng(seed)
    space = design.space
    cat = space.categorical_mask()
    Z = space.normalize(X)
    D = np.vstack([_row_sq_dists(Z, cat, i) for i in range(m)])
    best = D.min()
    for _ in range(iters):
        g = groups[rng.choice(len(groups), p=weights)]
        a, b = rng.choice(g, size=2, replace=False)
        j = rng.integers(space.n)
        if X[a, j] == X[b, j]:
            continue
        X[[a, b], j] = X[[b, a], j]
        Z[[a, b], j] = Z[[b, a], j]
        old_a, old_b = D[a].copy(), D[b].copy()
        for i in (a, b):
            D[i] = _row_sq_dists(Z, cat, i)
            D[:, i] = D[i]
        new = D.min()
        if new >= best:
            best = new
        else:
            X[[a, b], j] = X[[b, a], j]
            Z[[a, b], j] = Z[[b, a], j]
            D[a], D[:, a] = old_a, old_a
            D[b], D[:, b] = old_b, old_b
            D[a, b] = D[b, a] = old_a[b]
    return DesignMatrix(space, X, design.seed, dict(design.meta))
