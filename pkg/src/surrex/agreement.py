"""Cross-model explanation agreement (SHAP-ranking NDCG) and average-linkage clustering."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from surrex import io
from surrex.xai import ShapResult


def _abs_phi(s) -> np.ndarray:
    phi = s.phi if isinstance(s, ShapResult) else s
    return np.abs(np.atleast_2d(np.asarray(phi, dtype=float)))


def ndcg_rows(candidate, reference) -> np.ndarray:
    """Per-instance NDCG of the candidate's |phi| ranking scored with the reference's |phi|."""
    cand, ref = _abs_phi(candidate), _abs_phi(reference)
    if cand.shape != ref.shape:
        raise ValueError(f"shape mismatch: {cand.shape} vs {ref.shape}")
    m, n = ref.shape
    discount = 1.0 / np.log2(np.arange(2, n + 2))
    order = np.argsort(-cand, axis=1, kind="stable")
    ideal = np.argsort(-ref, axis=1, kind="stable")
    rows = np.arange(m)[:, None]
    dcg = ref[rows, order] @ discount
    idcg = ref[rows, ideal] @ discount
    out = np.ones(m)
    nz = idcg > 0
    out[nz] = dcg[nz] / idcg[nz]
    return out


def ndcg_pair(candidate, reference) -> float:
    return float(ndcg_rows(candidate, reference).mean())


@dataclass
class AgreementMatrix:
    names: list[str]
    values: np.ndarray

    def write(self, path: str | Path) -> None:
        """Percentages with one decimal, model names on both axes."""
        rows = [[name, *(f"{100.0 * v:.1f}" for v in self.values[i])] for i, name in enumerate(self.names)]
        io.write_csv(path, ["model", *self.names], rows)

    @classmethod
    def read(cls, path: str | Path) -> "AgreementMatrix":
        header, rows = io.read_csv(path)
        names = header[1:]
        vals = np.array([[float(x) / 100.0 for x in r[1:]] for r in rows])
        return cls(names, vals)


def _instance_key(s):
    return None if not isinstance(s, ShapResult) or s.instance_ids is None else [str(i) for i in s.instance_ids]


def ndcg_matrix(shap_by_model: Mapping[str, ShapResult]) -> AgreementMatrix:
    """Entry (a, b) scores candidate a against reference b; the diagonal is exactly 1."""
    names = list(shap_by_model)
    if len(names) < 2:
        raise ValueError("need at least two models")
    results = [shap_by_model[k] for k in names]
    keys = [_instance_key(r) for r in results]
    if any(k is not None for k in keys) and any(k != keys[0] for k in keys):
        raise ValueError("SHAP results cover different instance sets")
    k = len(names)
    M = np.ones((k, k))
    for a in range(k):
        for b in range(k):
            if a != b:
                M[a, b] = ndcg_pair(results[a], results[b])
    return AgreementMatrix(names, M)


def dissimilarity(matrix: AgreementMatrix | np.ndarray) -> np.ndarray:
    """D = 1 - (NDCG_ab + NDCG_ba) / 2 with an exact zero diagonal."""
    M = matrix.values if isinstance(matrix, AgreementMatrix) else np.asarray(matrix, dtype=float)
    D = 1.0 - 0.5 * (M + M.T)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    labels: list[str]
    merges: list[Merge]

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[mg.left, mg.right, mg.height, mg.size] for mg in self.merges], dtype=float)

    def members(self, cluster: int) -> list[int]:
        k = len(self.labels)
        if cluster < k:
            return [cluster]
        mg = self.merges[cluster - k]
        return self.members(mg.left) + self.members(mg.right)

    def top_split(self) -> tuple[set[str], set[str]]:
        if not self.merges:
            return set(self.labels), set()
        last = self.merges[-1]
        return ({self.labels[i] for i in self.members(last.left)},
                {self.labels[i] for i in self.members(last.right)})

    def cut(self, height: float) -> list[set[str]]:
        """Clusters obtained by undoing every merge above ``height``."""
        k = len(self.labels)
        alive = set(range(k))
        for i, mg in enumerate(self.merges):
            if mg.height <= height:
                alive -= {mg.left, mg.right}
                alive.add(k + i)
        return sorted(({self.labels[j] for j in self.members(c)} for c in alive), key=sorted)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels),
                "merges": [{"left": mg.left, "right": mg.right, "height": mg.height, "size": mg.size}
                           for mg in self.merges]}

    @classmethod
    def from_dict(cls, d: dict) -> "Dendrogram":
        return cls(list(d["labels"]), [Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["size"]))
                                       for m in d["merges"]])

    def write(self, path: str | Path) -> None:
        io.write_json(path, self.to_dict())


def cluster_average_linkage(D: np.ndarray, labels: Sequence[str] | None = None, tol: float = 1e-12) -> Dendrogram:
    """Agglomerative clustering with the unweighted average-linkage Lance-Williams update.

    Leaves are numbered 0..k-1 and the i-th merge creates cluster k+i. Among
    equally close pairs the lexicographically smallest (left, right) id pair
    merges first.
    """
    D = np.asarray(D, dtype=float)
    k = D.shape[0]
    if D.shape != (k, k):
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, atol=tol, rtol=0):
        raise ValueError("distance matrix must be symmetric")
    labels = list(labels) if labels is not None else [str(i) for i in range(k)]
    dist = {}
    for i in range(k):
        for j in range(i + 1, k):
            dist[(i, j)] = float(D[i, j])
    size = {i: 1 for i in range(k)}
    active = list(range(k))
    merges: list[Merge] = []
    for step in range(k - 1):
        best = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        (a, b), h = best
        new = k + step
        na, nb = size[a], size[b]
        active.remove(a)
        active.remove(b)
        for c in active:
            dac = dist.pop((min(a, c), max(a, c)))
            dbc = dist.pop((min(b, c), max(b, c)))
            dist[(c, new)] = (na * dac + nb * dbc) / (na + nb)
        del dist[(a, b)]
        size[new] = na + nb
        active.append(new)
        merges.append(Merge(a, b, h, na + nb))
    return Dendrogram(labels, merges)
