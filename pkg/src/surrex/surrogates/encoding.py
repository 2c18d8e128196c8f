"""Input encodings for the surrogate families.

``onehot``: standardised numeric columns plus one indicator column per level.
``dummy``: standardised numeric columns plus indicators for all but the first level.
``gower``: numeric columns scaled to [0, 1] by their bounds, categorical level indices kept.
``raw``: design values untouched (trees split on them natively).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from surrex.space import CATEGORICAL, DesignSpace

MODES = ("onehot", "dummy", "gower", "raw")


@dataclass
class Encoder:
    mode: str
    space: DesignSpace
    mean: list[float] = field(default_factory=list)
    scale: list[float] = field(default_factory=list)
    # original variable index of every encoded column, and whether it is an indicator
    column_var: list[int] = field(default_factory=list)
    column_is_indicator: list[bool] = field(default_factory=list)

    @classmethod
    def fit(cls, mode: str, space: DesignSpace, X: np.ndarray) -> "Encoder":
        if mode not in MODES:
            raise ValueError(f"unknown encoding {mode!r}")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mean, scale = [], []
        for j, var in enumerate(space.variables):
            if var.kind == CATEGORICAL:
                mean.append(0.0)
                scale.append(1.0)
            else:
                mu = float(X[:, j].mean())
                sd = float(X[:, j].std())
                mean.append(mu)
                scale.append(sd if sd > 0 else 1.0)
        enc = cls(mode, space, mean, scale)
        enc._layout()
        return enc

    def _layout(self):
        self.column_var, self.column_is_indicator = [], []
        for j, var in enumerate(self.space.variables):
            if var.kind == CATEGORICAL and self.mode in ("onehot", "dummy"):
                first = 0 if self.mode == "onehot" else 1
                for _ in range(first, len(var.levels)):
                    self.column_var.append(j)
                    self.column_is_indicator.append(True)
            else:
                self.column_var.append(j)
                self.column_is_indicator.append(False)

    @property
    def width(self) -> int:
        return len(self.column_var)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.mode == "raw":
            return X.copy()
        if self.mode == "gower":
            return self.space.normalize(X)
        cols = []
        for j, var in enumerate(self.space.variables):
            if var.kind == CATEGORICAL:
                first = 0 if self.mode == "onehot" else 1
                for lvl in range(first, len(var.levels)):
                    cols.append((X[:, j] == lvl).astype(float))
            else:
                cols.append((X[:, j] - self.mean[j]) / self.scale[j])
        return np.column_stack(cols)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "mean": list(self.mean), "scale": list(self.scale)}

    @classmethod
    def from_dict(cls, d: dict, space: DesignSpace) -> "Encoder":
        enc = cls(d["mode"], space, [float(v) for v in d["mean"]], [float(v) for v in d["scale"]])
        enc._layout()
        return enc
