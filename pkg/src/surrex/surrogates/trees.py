"""CART regression trees on mixed inputs and bootstrap random forests.

Splits minimise the within-child sum of squares. For 0/1 targets this is the
Gini criterion up to a factor of two (Gini = 2 p (1 - p) = 2 * variance), so
classification trees share the same code and only scale their impurity record.
Categorical features split one level against the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


@dataclass
class Tree:
    feature: np.ndarray      # -1 at leaves
    threshold: np.ndarray    # numeric: go left if x <= t; categorical: go left if x == t
    categorical: np.ndarray  # per node, whether the split is a level-equality test
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray  # total (not per-sample) reduction at each internal node

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=int)
        idx = np.arange(X.shape[0])
        while idx.size:
            nd = node[idx]
            f = self.feature[nd]
            inner = f >= 0
            idx, nd, f = idx[inner], nd[inner], f[inner]
            if not idx.size:
                break
            x = X[idx, f]
            t = self.threshold[nd]
            go_left = np.where(self.categorical[nd], x == t, x <= t)
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]

    def feature_importance(self, n_features: int) -> np.ndarray:
        """Raw per-feature sums of impurity reduction."""
        imp = np.zeros(n_features)
        inner = self.feature >= 0
        np.add.at(imp, self.feature[inner], self.impurity_decrease[inner])
        return imp

    def to_params(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "categorical", "left", "right", "value", "n_samples", "impurity_decrease")}

    @classmethod
    def from_params(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=int), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["categorical"], dtype=bool), np.asarray(d["left"], dtype=int),
                   np.asarray(d["right"], dtype=int), np.asarray(d["value"], dtype=float),
                   np.asarray(d["n_samples"], dtype=int), np.asarray(d["impurity_decrease"], dtype=float))


def _best_numeric(x, y, min_leaf):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    cs, cs2 = np.cumsum(ys), np.cumsum(ys * ys)
    nl = np.arange(1, n)
    sl, sl2 = cs[:-1], cs2[:-1]
    sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
    nr = n - nl
    sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
    ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return None
    sse = np.where(ok, sse, np.inf)
    i = int(np.argmin(sse))
    return sse[i], 0.5 * (xs[i] + xs[i + 1])


def _best_categorical(x, y, min_leaf):
    best = None
    n = x.size
    tot, tot2 = y.sum(), (y * y).sum()
    for lvl in np.unique(x):
        mask = x == lvl
        nl = int(mask.sum())
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        sl = y[mask].sum()
        sl2 = (y[mask] ** 2).sum()
        sse = (sl2 - sl * sl / nl) + ((tot2 - sl2) - (tot - sl) ** 2 / nr)
        if best is None or sse < best[0]:
            best = (sse, float(lvl))
    return best


def build_tree(X: np.ndarray, y: np.ndarray, is_cat: np.ndarray, min_leaf: int = 5,
               max_features: int | None = None, rng: np.random.Generator | None = None,
               max_depth: int | None = None, impurity_scale: float = 1.0) -> Tree:
    """Grow a CART tree depth-first.

    With ``max_features`` below the feature count, each node inspects features
    in a random order and stops once at least ``max_features`` have been tried
    and a valid split has been found.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = X.shape
    mf = n if max_features is None else max(1, min(n, int(max_features)))
    if mf < n and rng is None:
        raise ValueError("feature subsampling needs a random generator")
    feature, threshold, categorical, left, right, value, count, decrease = [], [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        categorical.append(False)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        count.append(idx.size)
        decrease.append(0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(m)), np.arange(m), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        yy = y[idx]
        parent_sse = float(((yy - yy.mean()) ** 2).sum())
        if parent_sse <= _EPS:
            continue
        order = rng.permutation(n) if mf < n else np.arange(n)
        best = None
        for tried, j in enumerate(order):
            if tried >= mf and best is not None:
                break
            xj = X[idx, j]
            cand = _best_categorical(xj, yy, min_leaf) if is_cat[j] else _best_numeric(xj, yy, min_leaf)
            if cand is not None and (best is None or cand[0] < best[0] - _EPS):
                best = (cand[0], cand[1], j)
        if best is None or parent_sse - best[0] <= _EPS * max(1.0, parent_sse):
            continue
        sse, t, j = best
        xj = X[idx, j]
        go_left = xj == t if is_cat[j] else xj <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node], categorical[node] = int(j), float(t), bool(is_cat[j])
        decrease[node] = impurity_scale * (parent_sse - sse)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature, dtype=int), np.array(threshold), np.array(categorical, dtype=bool),
                np.array(left, dtype=int), np.array(right, dtype=int), np.array(value),
                np.array(count, dtype=int), np.array(decrease))


def default_max_features(n: int, task: str) -> int:
    return math.ceil(math.sqrt(n)) if task == "classification" else math.ceil(n / 3)


@dataclass
class Forest:
    trees: list[Tree]
    tree_seeds: list[int]

    @classmethod
    def fit(cls, X, y, is_cat, n_trees=100, min_leaf=1, max_features=None, seed=0,
            tree_seeds=None, max_depth=None, impurity_scale=1.0) -> "Forest":
        m = X.shape[0]
        if tree_seeds is None:
            tree_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees, np.uint32)]
        trees = []
        for ts in tree_seeds:
            rng = np.random.default_rng(int(ts))
            boot = rng.integers(0, m, size=m)
            trees.append(build_tree(X[boot], y[boot], is_cat, min_leaf, max_features, rng, max_depth,
                                    impurity_scale))
        return cls(trees, [int(s) for s in tree_seeds])

    def tree_predictions(self, X) -> np.ndarray:
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        P = self.tree_predictions(X)
        # offsets from the first tree keep agreeing trees at exactly zero spread
        D = P - P[0]
        return P[0] + D.mean(axis=0), D.var(axis=0)

    def to_params(self) -> dict:
        return {"tree_seeds": self.tree_seeds, "trees": [t.to_params() for t in self.trees]}

    @classmethod
    def from_params(cls, d: dict) -> "Forest":
        return cls([Tree.from_params(t) for t in d["trees"]], [int(s) for s in d["tree_seeds"]])
