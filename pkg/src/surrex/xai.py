"""Model-agnostic explanations: exact Shapley/SHAP values and interactions, PDP and ICE.

A model is anything exposing ``predict_mean(X)`` or a plain callable mapping an
(N, n) array of design values to N outputs. Coalition values are estimated
interventionally: features outside the coalition are filled in from each
background point and the model output is averaged over the background.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from surrex import io
from surrex.space import CATEGORICAL, CONTINUOUS, DesignSpace

MAX_SHAPLEY_PLAYERS = 20
MAX_INTERACTION_PLAYERS = 14
MAX_BATCH_POINTS = 400_000


def as_function(model) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(model, "predict_mean"):
        return model.predict_mean
    if callable(model):
        return model
    raise TypeError(f"cannot predict with {type(model).__name__}")


# -- coalition games -------------------------------------------------------------


def _masks(n: int) -> np.ndarray:
    return np.arange(1 << n)


def _popcount(masks: np.ndarray) -> np.ndarray:
    counts = np.zeros_like(masks)
    m = masks.copy()
    while m.any():
        counts += m & 1
        m >>= 1
    return counts


def shapley_from_table(table: np.ndarray, n: int) -> np.ndarray:
    """Shapley values from coalition payoffs indexed by bitmask; works on (..., 2**n) tables."""
    table = np.asarray(table, dtype=float)
    masks = _masks(n)
    sizes = _popcount(masks)
    weight = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) if s < n else 0.0
                       for s in range(n + 1)])
    phi = np.empty(table.shape[:-1] + (n,))
    for i in range(n):
        without = masks[(masks >> i) & 1 == 0]
        gain = table[..., without | (1 << i)] - table[..., without]
        phi[..., i] = gain @ weight[sizes[without]]
    return phi


def interactions_from_table(table: np.ndarray, n: int) -> np.ndarray:
    """Symmetric pairwise interaction values with main effects on the diagonal."""
    table = np.asarray(table, dtype=float)
    masks = _masks(n)
    sizes = _popcount(masks)
    out = np.zeros(table.shape[:-1] + (n, n))
    if n >= 2:
        weight = np.array([factorial(s) * factorial(n - s - 2) / factorial(n - 1) if s <= n - 2 else 0.0
                           for s in range(n + 1)])
        for i in range(n):
            for j in range(i + 1, n):
                bi, bj = 1 << i, 1 << j
                rest = masks[(masks & (bi | bj)) == 0]
                delta = (table[..., rest | bi | bj] - table[..., rest | bi]
                         - table[..., rest | bj] + table[..., rest])
                val = 0.5 * (delta @ weight[sizes[rest]])
                out[..., i, j] = val
                out[..., j, i] = val
    phi = shapley_from_table(table, n)
    for i in range(n):
        out[..., i, i] = phi[..., i] - (out[..., i, :].sum(-1) - out[..., i, i])
    return out


def shapley_exact(v: Callable[[frozenset], float], n: int) -> np.ndarray:
    """Exact Shapley values of the game ``v`` over players 0..n-1 by subset enumeration."""
    if n < 1:
        raise ValueError("need at least one player")
    if n > MAX_SHAPLEY_PLAYERS:
        raise ValueError(f"exact enumeration limited to {MAX_SHAPLEY_PLAYERS} players, got {n}")
    table = np.array([v(frozenset(i for i in range(n) if mask >> i & 1)) for mask in _masks(n)],
                     dtype=float)
    return shapley_from_table(table, n)


# -- SHAP on models ---------------------------------------------------------------


@dataclass
class BackgroundSet:
    points: np.ndarray
    description: str = "user-supplied"

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise ValueError("background set is empty")

    @property
    def B(self) -> int:
        return self.points.shape[0]


def build_background(X: np.ndarray, cap: int = 256, seed: int = 0, dedupe: bool = True) -> BackgroundSet:
    """Training-design background: distinct rows, seed-subsampled down to ``cap``.

    Replicated records repeat the same input equally often, so keeping one copy
    per distinct row leaves every background average unchanged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("background set is empty")
    pts = np.unique(X, axis=0) if dedupe else X
    desc = f"training design, {pts.shape[0]} distinct rows"
    if pts.shape[0] > cap:
        rng = np.random.default_rng(seed)
        pts = pts[np.sort(rng.choice(pts.shape[0], size=cap, replace=False))]
        desc += f", subsampled to {cap} (seed {seed})"
    return BackgroundSet(pts, desc)


@dataclass
class ShapResult:
    base: np.ndarray
    phi: np.ndarray
    interactions: np.ndarray | None = None
    instances: np.ndarray | None = None
    predictions: np.ndarray | None = None
    instance_ids: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    background: str = ""

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]


def coalition_tables(model, instances: np.ndarray, background: BackgroundSet) -> np.ndarray:
    """Interventional v_x(S) for every instance and every coalition bitmask: (m, 2**n)."""
    f = as_function(model)
    X = np.atleast_2d(np.asarray(instances, dtype=float))
    bg = background.points
    m, n = X.shape
    if bg.shape[1] != n:
        raise ValueError(f"background has {bg.shape[1]} features, instances have {n}")
    masks = _masks(n)
    onoff = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)  # (2**n, n)
    per_instance = len(masks) * bg.shape[0]
    chunk = max(1, MAX_BATCH_POINTS // per_instance)
    tables = np.empty((m, len(masks)))
    for start in range(0, m, chunk):
        xs = X[start:start + chunk]
        pts = np.where(onoff[None, :, None, :], xs[:, None, None, :], bg[None, None, :, :])
        vals = np.asarray(f(pts.reshape(-1, n)), dtype=float)
        tables[start:start + chunk] = vals.reshape(len(xs), len(masks), bg.shape[0]).mean(-1)
    return tables


def shap_values(model, instances, background: BackgroundSet, interactions: bool = False,
                feature_names: Sequence[str] | None = None, instance_ids=None) -> ShapResult:
    X = np.atleast_2d(np.asarray(instances, dtype=float))
    n = X.shape[1]
    if n > MAX_SHAPLEY_PLAYERS:
        raise ValueError(f"exact SHAP limited to {MAX_SHAPLEY_PLAYERS} features")
    if interactions and n > MAX_INTERACTION_PLAYERS:
        raise ValueError(f"SHAP interactions limited to {MAX_INTERACTION_PLAYERS} features")
    tables = coalition_tables(model, X, background)
    return ShapResult(
        base=tables[:, 0].copy(),
        phi=shapley_from_table(tables, n),
        interactions=interactions_from_table(tables, n) if interactions else None,
        instances=X,
        predictions=tables[:, -1].copy(),
        instance_ids=np.arange(X.shape[0]) if instance_ids is None else np.asarray(instance_ids),
        feature_names=list(feature_names) if feature_names is not None else [f"x{i}" for i in range(n)],
        background=background.description,
    )


def shap_interactions(model, instances, background: BackgroundSet) -> np.ndarray:
    return shap_values(model, instances, background, interactions=True).interactions


def global_shap_importance(shap: ShapResult) -> np.ndarray:
    """Mean absolute SHAP value per feature."""
    if shap.m < 1:
        raise ValueError("need at least one instance")
    return np.abs(shap.phi).mean(0)


def importance_order(scores: np.ndarray) -> np.ndarray:
    """Feature indices by decreasing score; ties keep ascending feature index."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


# -- partial dependence -----------------------------------------------------------


@dataclass
class PdpResult:
    features: tuple[int, ...]
    grid: np.ndarray  # (G, |A|)
    values: np.ndarray  # (G,)
    ice: np.ndarray | None = None  # (B, G)
    sensitivity: float | None = None
    kind: str | None = None
    feature_names: list[str] = field(default_factory=list)


def default_grid(space: DesignSpace, j: int, n_nodes: int = 50) -> np.ndarray:
    var = space[j]
    if var.kind == CONTINUOUS:
        return np.linspace(var.lo, var.hi, n_nodes)
    return var.level_values()


def ice(model, feature: int, grid, background: BackgroundSet) -> np.ndarray:
    """One curve per background point: (B, G)."""
    return _sweep(model, (feature,), np.asarray(grid, dtype=float).reshape(-1, 1), background)


def _sweep(model, A: tuple[int, ...], grid: np.ndarray, background: BackgroundSet) -> np.ndarray:
    f = as_function(model)
    bg = background.points
    G = grid.shape[0]
    pts = np.repeat(bg[None, :, :], G, axis=0)  # (G, B, n)
    for k, j in enumerate(A):
        pts[:, :, j] = grid[:, k][:, None]
    vals = np.asarray(f(pts.reshape(-1, bg.shape[1])), dtype=float).reshape(G, bg.shape[0])
    return vals.T


def pdp(model, A: Sequence[int], grid, background: BackgroundSet, keep_ice: bool = True,
        kind: str | None = None) -> PdpResult:
    """Partial dependence on one or two features; ``grid`` holds nodes as rows."""
    A = tuple(int(a) for a in A)
    if len(A) not in (1, 2):
        raise ValueError("partial dependence supports one or two features")
    grid = np.asarray(grid, dtype=float).reshape(-1, len(A))
    curves = _sweep(model, A, grid, background)
    res = PdpResult(A, grid, curves.mean(0), curves if keep_ice else None, kind=kind)
    if len(A) == 1 and kind is not None and grid.shape[0] > 1:
        res.sensitivity = pdp_sensitivity(res, kind)
    return res


def pdp_sensitivity(result: PdpResult, kind: str) -> float:
    """sqrt of the PDP variance for ordered variables, a quarter of its range for categorical ones."""
    if len(result.features) != 1:
        raise ValueError("sensitivity needs a one-dimensional PDP")
    v = np.asarray(result.values, dtype=float)
    if v.size < 2:
        raise ValueError("sensitivity needs at least two grid nodes")
    if kind == CATEGORICAL:
        return float((v.max() - v.min()) / 4.0)
    return float(np.sqrt(np.var(v)))


# -- exports ------------------------------------------------------------------------


def write_shap_csv(path: str | Path, shap: ShapResult) -> None:
    rows = ([str(shap.instance_ids[i]), shap.feature_names[j], io.fmt_real(shap.phi[i, j])]
            for i in range(shap.m) for j in range(shap.n))
    io.write_csv(path, ["instance_id", "feature", "phi"], rows)


def write_beeswarm_csv(path: str | Path, shap: ShapResult, space: DesignSpace) -> None:
    rows = ([shap.feature_names[j], space[j].format_value(shap.instances[i, j]), io.fmt_real(shap.phi[i, j])]
            for j in range(shap.n) for i in range(shap.m))
    io.write_csv(path, ["feature", "feature_value", "phi"], rows)


def write_interactions_csv(path: str | Path, shap: ShapResult) -> None:
    names = shap.feature_names
    rows = ([str(shap.instance_ids[i]), names[a], names[b], io.fmt_real(shap.interactions[i, a, b])]
            for i in range(shap.m) for a in range(shap.n) for b in range(shap.n))
    io.write_csv(path, ["instance_id", "feature", "feature_other", "phi"], rows)


def read_shap_csv(path: str | Path) -> ShapResult:
    header, rows = io.read_csv(path)
    if header[:3] != ["instance_id", "feature", "phi"]:
        raise ValueError(f"{path}: not a SHAP export")
    ids = list(dict.fromkeys(r[0] for r in rows))
    feats = list(dict.fromkeys(r[1] for r in rows))
    vals = {(r[0], r[1]): float(r[2]) for r in rows}
    if len(vals) != len(ids) * len(feats):
        raise ValueError(f"{path}: every instance needs one row per feature")
    phi = np.array([[vals[(i, f)] for f in feats] for i in ids])
    return ShapResult(base=np.zeros(len(ids)), phi=phi, instance_ids=np.array(ids), feature_names=feats)


def write_pdp_csv(path: str | Path, results: Iterable[PdpResult], space: DesignSpace) -> None:
    """Long format (feature, grid_value, curve_id, value); curve_id -1 is the PDP mean."""
    rows = []
    for res in results:
        if len(res.features) != 1:
            raise ValueError("long-format export covers one-dimensional PDPs")
        j = res.features[0]
        var = space[j]
        for g, node in enumerate(res.grid[:, 0]):
            label = var.format_value(node)
            rows.append([var.name, label, "-1", io.fmt_real(res.values[g])])
            if res.ice is not None:
                for b in range(res.ice.shape[0]):
                    rows.append([var.name, label, str(b), io.fmt_real(res.ice[b, g])])
    io.write_csv(path, ["feature", "grid_value", "curve_id", "value"], rows)
