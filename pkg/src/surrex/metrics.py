"""Surrogate quality metrics (RMSE, MCC, PVA) and the dense ranking table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from surrex import io

VARIANCE_FLOOR = 1e-12


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def rmse(y_true, y_pred) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    TN: int
    FP: int
    FN: int

    def __post_init__(self):
        if min(self.TP, self.TN, self.FP, self.FN) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true).astype(bool).ravel()
        p = np.asarray(y_pred).astype(bool).ravel()
        if t.shape != p.shape:
            raise ValueError(f"length mismatch: {t.size} vs {p.size}")
        return cls(int((t & p).sum()), int((~t & ~p).sum()), int((~t & p).sum()), int((t & ~p).sum()))


def mcc(c: ConfusionCounts) -> float | None:
    """Matthews correlation; ``None`` when any denominator factor is zero."""
    factors = (c.TP + c.FP, c.TP + c.FN, c.TN + c.FP, c.TN + c.FN)
    if 0 in factors:
        return None
    return (c.TP * c.TN - c.FP * c.FN) / math.sqrt(math.prod(factors))


def pva(y_true, y_pred, variances) -> float:
    """|ln(mean(residual^2 / variance))|, variances floored at 1e-12."""
    a, b = _pair(y_true, y_pred)
    v = np.asarray(variances, dtype=float).ravel()
    if v.shape != a.shape:
        raise ValueError(f"length mismatch: {a.size} vs {v.size}")
    v = np.maximum(v, VARIANCE_FLOOR)
    with np.errstate(divide="ignore"):  # exact predictions give ln(0)
        return float(abs(np.log(np.mean((a - b) ** 2 / v))))


def dense_rank(values: Sequence[float | None], descending: bool = False) -> list[int | None]:
    """1-based dense ranks; missing values get ``None``. Ties share a rank."""
    present = sorted({v for v in values if v is not None and not math.isnan(v)}, reverse=descending)
    pos = {v: i + 1 for i, v in enumerate(present)}
    return [None if v is None or math.isnan(v) else pos[v] for v in values]


@dataclass
class MetricRow:
    model: str
    rmse: float | None = None
    mcc: float | None = None
    pva: float | None = None
    mcc_defined: bool = True


@dataclass
class MetricReport:
    rows: list[MetricRow]
    ranks: dict[str, list[int | None]] = field(default_factory=dict)

    COLUMNS = ("Model", "RMSE", "MCC", "PVA", "Reg. Rank", "Class. Rank", "PVA Rank")

    def row(self, model: str) -> MetricRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def rank_of(self, model: str, metric: str) -> int | None:
        i = [r.model for r in self.rows].index(model)
        return self.ranks[metric][i]

    def to_rows(self) -> list[list[str]]:
        def fmt(v):
            return "" if v is None else io.fmt_real(v)

        out = []
        for i, r in enumerate(self.rows):
            mcc_txt = fmt(r.mcc) if r.mcc_defined else "undefined"
            ranks = [self.ranks[k][i] for k in ("rmse", "mcc", "pva")]
            out.append([r.model, fmt(r.rmse), mcc_txt, fmt(r.pva),
                        *("" if k is None else str(k) for k in ranks)])
        return out

    def write(self, path: str | Path) -> None:
        io.write_csv(path, self.COLUMNS, self.to_rows())

    @classmethod
    def read(cls, path: str | Path) -> "MetricReport":
        header, rows = io.read_csv(path)
        if tuple(header) != cls.COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")

        def num(s):
            return None if s in ("", "undefined") else float(s)

        parsed = [MetricRow(r[0], num(r[1]), num(r[2]), num(r[3]), r[2] != "undefined") for r in rows]
        return rank_models(parsed)


def rank_models(reports: Sequence[MetricRow] | Mapping[str, Mapping]) -> MetricReport:
    """Dense ranks: ascending for RMSE and PVA, descending for MCC; rows sorted by model name."""
    if isinstance(reports, Mapping):
        rows = [MetricRow(name, **dict(vals)) for name, vals in reports.items()]
    else:
        rows = list(reports)
    if not rows:
        raise ValueError("rank_models needs at least one row")
    rows.sort(key=lambda r: r.model)
    ranks = {
        "rmse": dense_rank([r.rmse for r in rows]),
        "mcc": dense_rank([r.mcc for r in rows], descending=True),
        "pva": dense_rank([r.pva for r in rows]),
    }
    return MetricReport(rows, ranks)
