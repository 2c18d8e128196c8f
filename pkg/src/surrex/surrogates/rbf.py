"""Thin-plate-spline radial basis interpolant with an appended linear polynomial."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surrex.errors import NumericalError


def thin_plate(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


def _dists(A, B):
    chunk = max(1, 2_000_000 // max(1, B.size))
    D = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], chunk):
        d = A[s:s + chunk, None, :] - B[None, :, :]
        D[s:s + chunk] = np.sqrt((d * d).sum(-1))
    return D


@dataclass
class RbfModel:
    centers: np.ndarray   # kernel coordinates of the distinct training points
    poly: np.ndarray      # polynomial-tail coordinates of the same points
    weights: np.ndarray
    coef: np.ndarray      # [intercept, linear terms]
    reg: float = 0.0

    @classmethod
    def fit(cls, centers, poly, y, reg=0.0) -> "RbfModel":
        k = centers.shape[0]
        P = np.column_stack([np.ones(k), poly])
        q = P.shape[1]
        if k < q:
            raise NumericalError(f"RBF needs at least {q} distinct points, got {k}")
        A = np.zeros((k + q, k + q))
        A[:k, :k] = thin_plate(_dists(centers, centers)) + reg * np.eye(k)
        A[:k, k:] = P
        A[k:, :k] = P.T
        rhs = np.r_[y, np.zeros(q)]
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("RBF interpolation system is singular") from exc
        if not np.all(np.isfinite(sol)):
            raise NumericalError("RBF interpolation system is singular")
        return cls(centers, poly, sol[:k], sol[k:], reg)

    def predict(self, Cq: np.ndarray, Pq: np.ndarray) -> np.ndarray:
        Cq, Pq = np.atleast_2d(Cq), np.atleast_2d(Pq)
        return thin_plate(_dists(Cq, self.centers)) @ self.weights + np.column_stack([np.ones(Pq.shape[0]), Pq]) @ self.coef

    def to_params(self) -> dict:
        return {"centers": self.centers.tolist(), "poly": self.poly.tolist(), "weights": self.weights.tolist(),
                "coef": self.coef.tolist(), "reg": self.reg}

    @classmethod
    def from_params(cls, d: dict) -> "RbfModel":
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(arr("centers"), np.atleast_2d(arr("poly")), arr("weights"), arr("coef"), float(d["reg"]))
