"""Lazy learners under the normalised mixed-variable distance: k-nearest neighbours and IDW."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surrex.space import DesignSpace, gower_sq_dists


@dataclass
class NeighborModel:
    space: DesignSpace
    X: np.ndarray
    y: np.ndarray
    method: str          # "knn" or "idw"
    k: int = 15
    power: float = 2.0

    def _sq_dists(self, Xq: np.ndarray) -> np.ndarray:
        return gower_sq_dists(self.space, Xq, self.X)

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        D2 = self._sq_dists(Xq)
        if self.method == "knn":
            # stable sort keeps replicate groups together when distances tie
            idx = np.argsort(D2, axis=1, kind="stable")[:, : self.k]
            return self.y[idx].mean(axis=1)
        out = np.empty(D2.shape[0])
        hit = D2 == 0.0
        any_hit = hit.any(axis=1)
        for i in np.flatnonzero(any_hit):
            out[i] = self.y[hit[i]].mean()
        rest = ~any_hit
        if rest.any():
            w = D2[rest] ** (-0.5 * self.power)
            out[rest] = (w @ self.y) / w.sum(axis=1)
        return out

    def neighbors(self, Xq: np.ndarray) -> np.ndarray:
        return np.argsort(self._sq_dists(Xq), axis=1, kind="stable")[:, : self.k]

    def to_params(self) -> dict:
        return {"method": self.method, "k": self.k, "power": self.power,
                "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_params(cls, d: dict, space: DesignSpace) -> "NeighborModel":
        return cls(space, np.asarray(d["X"], dtype=float), np.asarray(d["y"], dtype=float),
                   d["method"], int(d["k"]), float(d["power"]))
