"""Training, querying and persisting surrogates of every supported kind."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from surrex import io
from surrex.dataset import BINARY, Dataset
from surrex.errors import DataContractError
from surrex.space import DesignSpace
from surrex.surrogates.encoding import Encoder
from surrex.surrogates.kriging import ABSEXP, SQEXP, KrigingModel
from surrex.surrogates.linear import PolynomialModel
from surrex.surrogates.neighbors import NeighborModel
from surrex.surrogates.rbf import RbfModel
from surrex.surrogates.trees import Forest, Tree, build_tree, default_max_features

KINDS = ("LR", "QP", "KNN", "IDW", "DT", "RF", "GP", "RBF")
TASKS = ("regression", "classification")
NATIVE_VARIANCE = ("GP", "RF")
ENCODING = {"LR": "dummy", "QP": "dummy", "KNN": "gower", "IDW": "gower",
            "DT": "raw", "RF": "raw", "GP": "onehot", "RBF": "onehot"}
FORMAT = "surrex-surrogate"
VARIANCE_FLOOR = 1e-12
ONE_SIGMA_COVERAGE = 0.6827


@dataclass
class FitOptions:
    seed: int = 0
    k: int = 15
    idw_power: float = 2.0
    dt_min_leaf: int = 5
    rf_min_leaf: int = 1
    n_trees: int = 100
    max_features: int | None = None
    tree_seeds: list[int] | None = None
    max_depth: int | None = None
    gp_kernel: str | None = None      # default: squared-exponential (regression), absolute-exponential (classification)
    gp_trend: str = "constant"
    gp_noise: str = "replicates"      # or "none"
    gp_restarts: int = 5
    gp_nugget: float = 1e-10
    rbf_reg: float = 0.0

    @classmethod
    def from_dict(cls, d: dict | None) -> "FitOptions":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataContractError(f"unknown fit options {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float | None = None
    label: bool | None = None


# -- replicate noise -------------------------------------------------------------

def estimate_replicate_noise(data: Dataset, target: str) -> dict[int, float]:
    """Unbiased within-group variance per config id.

    Single-record groups get the mean variance of the replicated groups (0 if none are replicated).
    """
    y = data.target(target)
    out, single = {}, []
    for cid in np.unique(data.config_ids):
        vals = y[data.config_ids == cid]
        if vals.size >= 2:
            # offsets from the first replicate keep identical replicates at exactly zero
            out[int(cid)] = float((vals - vals[0]).var(ddof=1))
        else:
            single.append(int(cid))
    fill = float(np.mean(list(out.values()))) if out else 0.0
    for cid in single:
        out[cid] = fill
    return out


def record_noise(data: Dataset, target: str) -> np.ndarray:
    per = estimate_replicate_noise(data, target)
    return np.array([per[int(c)] for c in data.config_ids])


# -- the fitted object -----------------------------------------------------------

def _weight_groups(enc: Encoder) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for col, var in enumerate(enc.column_var):
        groups.setdefault(var, []).append(col)
    return list(groups.values())


@dataclass
class TrainedSurrogate:
    kind: str
    task: str
    target: str
    space: DesignSpace
    options: FitOptions
    encoder: Encoder
    core: Any
    data_fingerprint: str
    n_train: int
    conformal_sigma: float | None = None
    calibration: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.kind

    @property
    def has_variance(self) -> bool:
        return self.kind in NATIVE_VARIANCE or self.conformal_sigma is not None

    def _raw(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        X = self.space.check(np.atleast_2d(np.asarray(X, dtype=float)))
        kind, core = self.kind, self.core
        if kind in ("LR", "QP"):
            return core.predict(self.encoder.transform(X)), None
        if kind in ("KNN", "IDW"):
            return core.predict(X), None
        if kind == "DT":
            return core.predict(X), None
        if kind == "RF":
            return core.predict(X)
        if kind == "GP":
            return core.predict(self.encoder.transform(X))
        if kind == "RBF":
            return core.predict(self.encoder.transform(X), self._poly_encoder().transform(X)), None
        raise AssertionError(kind)

    def _poly_encoder(self) -> Encoder:
        return Encoder.from_dict({**self.encoder.to_dict(), "mode": "dummy"}, self.space)

    def predict_mean(self, X: np.ndarray) -> np.ndarray:
        return self._raw(X)[0]

    def predict_variance(self, X: np.ndarray) -> np.ndarray | None:
        if self.conformal_sigma is not None:
            return np.full(np.atleast_2d(X).shape[0], max(self.conformal_sigma**2, VARIANCE_FLOOR))
        return self._raw(X)[1]

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        mean, var = self._raw(X)
        if self.conformal_sigma is not None:
            var = np.full(mean.size, max(self.conformal_sigma**2, VARIANCE_FLOOR))
        return mean, var

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return self.predict_mean(X) >= 0.5

    def predict(self, x) -> Prediction:
        mean, var = self.predict_batch(np.asarray(x, dtype=float)[None, :])
        label = bool(mean[0] >= 0.5) if self.task == "classification" else None
        return Prediction(float(mean[0]), None if var is None else float(var[0]), label)

    def __call__(self, X):
        return self.predict_mean(X)

    def with_variance_scale(self, factor: float) -> "TrainedSurrogate":
        """Copy whose conformal variance is multiplied by ``factor``."""
        if self.conformal_sigma is None:
            raise DataContractError("only conformally calibrated models carry a rescalable variance")
        return dataclasses.replace(self, conformal_sigma=float(self.conformal_sigma * np.sqrt(factor)),
                                   calibration={**self.calibration, "scale": factor})

    # -- persistence --------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": 1,
            "kind": self.kind,
            "task": self.task,
            "target": self.target,
            "space": self.space.to_dict(),
            "options": dataclasses.asdict(self.options),
            "encoding": self.encoder.to_dict(),
            "params": self.core.to_params() if not isinstance(self.core, Tree) else {"tree": self.core.to_params()},
            "data_fingerprint": self.data_fingerprint,
            "n_train": self.n_train,
            "conformal_sigma": self.conformal_sigma,
            "calibration": self.calibration,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedSurrogate":
        if d.get("format") != FORMAT:
            raise DataContractError("not a surrogate document")
        space = DesignSpace.from_dict(d["space"])
        kind, p = d["kind"], d["params"]
        if kind in ("LR", "QP"):
            core = PolynomialModel.from_params(p)
        elif kind in ("KNN", "IDW"):
            core = NeighborModel.from_params(p, space)
        elif kind == "DT":
            core = Tree.from_params(p["tree"])
        elif kind == "RF":
            core = Forest.from_params(p)
        elif kind == "GP":
            core = KrigingModel.from_params(p)
        elif kind == "RBF":
            core = RbfModel.from_params(p)
        else:
            raise DataContractError(f"unknown surrogate kind {kind!r}")
        return cls(kind, d["task"], d["target"], space, FitOptions.from_dict(d["options"]),
                   Encoder.from_dict(d["encoding"], space), core, d["data_fingerprint"], int(d["n_train"]),
                   d.get("conformal_sigma"), dict(d.get("calibration") or {}), dict(d.get("provenance") or {}))

    def fingerprint(self) -> str:
        return io.obj_fingerprint(self.to_dict())

    def save(self, path: str | Path) -> None:
        io.write_json(path, {**self.to_dict(), "model_fingerprint": self.fingerprint()})

    @classmethod
    def load(cls, path: str | Path) -> "TrainedSurrogate":
        doc = io.read_json(path)
        stored = doc.pop("model_fingerprint", None)
        model = cls.from_dict(doc)
        if stored is not None and stored != io.obj_fingerprint(doc):
            raise DataContractError(f"{path}: model fingerprint mismatch (file was modified)")
        return model


# -- training ----------------------------------------------------------------------

def _resolve_target(data: Dataset, task: str | None, target: str | None) -> tuple[str, str]:
    if target is None:
        binary = task == "classification"
        cands = [k for k, t in data.target_types.items() if (t == BINARY) == binary]
        if not cands and task is None:
            cands = list(data.targets)
        if not cands:
            raise DataContractError(f"no {task or 'regression'} target in dataset")
        target = "sparsity" if task != "classification" and "sparsity" in cands else cands[0]
    if target not in data.targets:
        raise DataContractError(f"dataset has no target {target!r}")
    if task is None:
        task = "classification" if data.target_types.get(target) == BINARY else "regression"
    if task not in TASKS:
        raise DataContractError(f"unknown task {task!r}")
    return task, target


def train(data: Dataset, kind: str, task: str | None = None, target: str | None = None,
          options: FitOptions | dict | None = None) -> TrainedSurrogate:
    kind = kind.upper()
    if kind not in KINDS:
        raise DataContractError(f"unknown surrogate kind {kind!r}; choose from {KINDS}")
    opts = options if isinstance(options, FitOptions) else FitOptions.from_dict(options)
    task, target = _resolve_target(data, task, target)
    X, y = data.X, data.target(target)
    if y.size == 0:
        raise DataContractError("cannot train on an empty dataset")
    if task == "classification" and not np.isin(y, (0.0, 1.0)).all():
        raise DataContractError(f"classification target {target!r} must be 0/1")
    space = data.space
    enc = Encoder.fit(ENCODING[kind], space, X)
    n = space.n
    is_cat = space.categorical_mask()
    imp_scale = 2.0 if task == "classification" else 1.0

    if kind in ("LR", "QP"):
        core = PolynomialModel.fit(enc.transform(X), y, 1 if kind == "LR" else 2,
                                   enc.column_var, enc.column_is_indicator)
    elif kind == "KNN":
        if data.m < opts.k:
            raise DataContractError(f"kNN needs at least k={opts.k} records, got {data.m}")
        core = NeighborModel(space, X.copy(), y.copy(), "knn", opts.k, opts.idw_power)
    elif kind == "IDW":
        core = NeighborModel(space, X.copy(), y.copy(), "idw", opts.k, opts.idw_power)
    elif kind == "DT":
        core = build_tree(X, y, is_cat, opts.dt_min_leaf, None, None, opts.max_depth, imp_scale)
    elif kind == "RF":
        mf = opts.max_features or default_max_features(n, task)
        core = Forest.fit(X, y, is_cat, opts.n_trees, opts.rf_min_leaf, mf, opts.seed, opts.tree_seeds,
                          opts.max_depth, imp_scale)
    elif kind == "GP":
        kernel = opts.gp_kernel or (ABSEXP if task == "classification" else SQEXP)
        if opts.gp_noise not in ("replicates", "none"):
            raise DataContractError(f"unknown gp_noise {opts.gp_noise!r}")
        noise = record_noise(data, target) if opts.gp_noise == "replicates" else None
        core = KrigingModel.fit(enc.transform(X), y, _weight_groups(enc), kernel, opts.gp_trend, noise,
                                opts.gp_nugget, opts.gp_restarts, opts.seed)
    else:  # RBF interpolates the replicate-group means of the distinct inputs
        Xu, inv = np.unique(X, axis=0, return_inverse=True)
        inv = inv.ravel()
        yu = np.bincount(inv, weights=y) / np.bincount(inv)
        poly_enc = Encoder.from_dict({**enc.to_dict(), "mode": "dummy"}, space)
        core = RbfModel.fit(enc.transform(Xu), poly_enc.transform(Xu), yu, opts.rbf_reg)
    return TrainedSurrogate(kind, task, target, space, opts, enc, core, data.fingerprint(), data.m)


# -- post-hoc tools ------------------------------------------------------------------

def conformal_calibrate(model: TrainedSurrogate, data: Dataset, seed: int = 0) -> TrainedSurrogate:
    """Split-conformal constant variance.

    Config groups are halved at random; a copy of the model is refit on one
    half and its absolute residuals on the other half give the one-sigma
    quantile. The returned model keeps the original mean predictor.
    """
    if model.has_variance:
        raise DataContractError(f"{model.kind} already provides a predictive variance")
    ids = np.unique(data.config_ids)
    perm = np.random.default_rng(seed).permutation(ids)
    fit_ids, cal_ids = perm[: ids.size // 2], perm[ids.size // 2:]
    cal = data.select_configs(cal_ids)
    if cal.m < 4 or fit_ids.size == 0:
        raise DataContractError(f"conformal calibration needs at least 4 held-out records, got {cal.m}")
    half = train(data.select_configs(fit_ids), model.kind, model.task, model.target, model.options)
    resid = np.abs(cal.target(model.target) - half.predict_mean(cal.X))
    sigma = float(np.quantile(resid, ONE_SIGMA_COVERAGE))
    return dataclasses.replace(model, conformal_sigma=sigma,
                               calibration={"seed": int(seed), "n_fit": int(data.m - cal.m), "n_cal": int(cal.m),
                                            "coverage": ONE_SIGMA_COVERAGE})


def mdi_importance(model: TrainedSurrogate) -> np.ndarray:
    """Impurity-reduction importances summed per feature, averaged over trees, normalised to 1."""
    if model.kind == "DT":
        raw = model.core.feature_importance(model.space.n)
    elif model.kind == "RF":
        raw = np.mean([t.feature_importance(model.space.n) for t in model.core.trees], axis=0)
    else:
        raise DataContractError(f"MDI importance needs a tree model, got {model.kind}")
    total = raw.sum()
    if total <= 0:
        raise DataContractError("the tree has no splits, importances are undefined")
    return raw / total
