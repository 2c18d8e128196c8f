"""Least-squares polynomial surrogates: affine (LR) and full quadratic (QP)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surrex.errors import DataContractError, RankDeficiencyError


def quadratic_terms(column_var: list[int], column_is_indicator: list[bool]) -> list[tuple[int, int]]:
    """Index pairs (a, b), a <= b, of the second-order monomials.

    Squares of indicator columns duplicate the column itself and products of two
    indicators of the same categorical variable are identically zero, so both are skipped.
    """
    w = len(column_var)
    pairs = []
    for a in range(w):
        for b in range(a, w):
            if a == b and column_is_indicator[a]:
                continue
            if a != b and column_is_indicator[a] and column_is_indicator[b] and column_var[a] == column_var[b]:
                continue
            pairs.append((a, b))
    return pairs


@dataclass
class PolynomialModel:
    degree: int
    coef: np.ndarray
    pairs: list[tuple[int, int]]

    @staticmethod
    def basis(Z: np.ndarray, degree: int, pairs) -> np.ndarray:
        cols = [np.ones(Z.shape[0]), *Z.T]
        if degree == 2:
            cols += [Z[:, a] * Z[:, b] for a, b in pairs]
        return np.column_stack(cols)

    @classmethod
    def fit(cls, Z: np.ndarray, y: np.ndarray, degree: int, column_var, column_is_indicator) -> "PolynomialModel":
        pairs = quadratic_terms(column_var, column_is_indicator) if degree == 2 else []
        B = cls.basis(Z, degree, pairs)
        m, p = B.shape
        if m < p:
            raise DataContractError(f"{'QP' if degree == 2 else 'LR'} needs at least {p} records, got {m}")
        coef, _, rank, sv = np.linalg.lstsq(B, y, rcond=None)
        tol = sv.max() * max(m, p) * np.finfo(float).eps if sv.size else 0.0
        if rank < p or (sv.size and sv.min() <= tol):
            raise RankDeficiencyError(f"normal equations are singular (rank {rank} < {p} basis terms)")
        return cls(degree, coef, pairs)

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return self.basis(Z, self.degree, self.pairs) @ self.coef

    def to_params(self) -> dict:
        return {"degree": self.degree, "coef": self.coef.tolist(), "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_params(cls, d: dict) -> "PolynomialModel":
        return cls(int(d["degree"]), np.asarray(d["coef"], dtype=float), [tuple(p) for p in d["pairs"]])
