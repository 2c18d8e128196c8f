"""Mixed continuous / integer / categorical design spaces and design matrices.

Every value is stored as a float: reals for continuous variables, exact
integers for integer variables and the level index for categorical ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from surrex import io
from surrex.errors import DataContractError, DomainError

CONTINUOUS = "continuous"
INTEGER = "integer"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, INTEGER, CATEGORICAL)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataContractError(f"{self.name}: unknown variable kind {self.kind!r}")
        if self.kind == CONTINUOUS:
            if self.lo is None or self.hi is None or not float(self.lo) < float(self.hi):
                raise DataContractError(f"{self.name}: continuous bounds need lo < hi")
        elif self.kind == INTEGER:
            if self.lo is None or self.hi is None:
                raise DataContractError(f"{self.name}: integer bounds missing")
            if int(self.lo) != self.lo or int(self.hi) != self.hi or self.lo > self.hi:
                raise DataContractError(f"{self.name}: integer bounds need integral lo <= hi")
        else:
            if len(self.levels) < 2 or len(set(self.levels)) != len(self.levels):
                raise DataContractError(f"{self.name}: categorical needs >= 2 distinct levels")

    @classmethod
    def continuous(cls, name: str, lo: float, hi: float) -> "VariableSpec":
        return cls(name, CONTINUOUS, float(lo), float(hi))

    @classmethod
    def integer(cls, name: str, lo: int, hi: int) -> "VariableSpec":
        return cls(name, INTEGER, int(lo), int(hi))

    @classmethod
    def categorical(cls, name: str, levels: Sequence[str]) -> "VariableSpec":
        return cls(name, CATEGORICAL, levels=tuple(str(v) for v in levels))

    @property
    def n_levels(self) -> int | None:
        """Number of discrete values; ``None`` for continuous variables."""
        if self.kind == INTEGER:
            return int(self.hi) - int(self.lo) + 1
        if self.kind == CATEGORICAL:
            return len(self.levels)
        return None

    def level_values(self) -> np.ndarray:
        if self.kind == INTEGER:
            return np.arange(int(self.lo), int(self.hi) + 1, dtype=float)
        if self.kind == CATEGORICAL:
            return np.arange(len(self.levels), dtype=float)
        raise TypeError("continuous variables have no levels")

    def contains(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == CONTINUOUS:
            return (v >= self.lo) & (v <= self.hi)
        lo, hi = (self.lo, self.hi) if self.kind == INTEGER else (0, len(self.levels) - 1)
        return (v >= lo) & (v <= hi) & (np.floor(v) == v)

    def format_value(self, v: float) -> str:
        if self.kind == CONTINUOUS:
            return io.fmt_real(v)
        if self.kind == INTEGER:
            return str(int(v))
        return self.levels[int(v)]

    def parse_value(self, s: str) -> float:
        if self.kind == CATEGORICAL:
            try:
                return float(self.levels.index(s))
            except ValueError:
                raise DomainError(f"{self.name}: unknown level {s!r}") from None
        return float(s)

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            d["levels"] = list(self.levels)
        elif self.kind == INTEGER:
            d["lo"], d["hi"] = int(self.lo), int(self.hi)
        else:
            d["lo"], d["hi"] = float(self.lo), float(self.hi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        kind = d.get("kind")
        if kind == CONTINUOUS:
            return cls.continuous(d["name"], d["lo"], d["hi"])
        if kind == INTEGER:
            return cls.integer(d["name"], d["lo"], d["hi"])
        if kind == CATEGORICAL:
            return cls.categorical(d["name"], d["levels"])
        raise DataContractError(f"unknown variable kind {kind!r}")


@dataclass(frozen=True)
class DesignSpace:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise DataContractError("a design space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DataContractError("variable names must be unique")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def __getitem__(self, i: int) -> VariableSpec:
        return self.variables[i]

    def __iter__(self):
        return iter(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataContractError(f"unknown variable {name!r}") from None

    def kinds(self) -> list[str]:
        return [v.kind for v in self.variables]

    def check(self, X: np.ndarray) -> np.ndarray:
        """Return ``X`` as a 2-D float array, raising if any value is off-domain."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise DomainError(f"expected {self.n} columns, got {X.shape[1]}")
        for j, var in enumerate(self.variables):
            bad = ~var.contains(X[:, j])
            if bad.any():
                raise DomainError(f"{var.name}: value {X[bad, j][0]!r} outside domain")
        return X

    def normalize(self, X: np.ndarray) -> np.ndarray:
        """Map continuous/integer columns onto [0, 1]; categorical columns keep level indices."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = X.copy()
        for j, var in enumerate(self.variables):
            if var.kind != CATEGORICAL:
                width = float(var.hi) - float(var.lo)
                Z[:, j] = (X[:, j] - var.lo) / width if width > 0 else 0.0
        return Z

    def categorical_mask(self) -> np.ndarray:
        return np.array([v.kind == CATEGORICAL for v in self.variables])

    def to_dict(self) -> dict:
        return {"variables": [v.to_dict() for v in self.variables]}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpace":
        try:
            return cls(tuple(VariableSpec.from_dict(v) for v in d["variables"]))
        except (KeyError, TypeError) as exc:
            raise DataContractError(f"malformed design space: {exc}") from exc

    def fingerprint(self) -> str:
        return io.obj_fingerprint(self.to_dict())


def gower_sq_dists(space: DesignSpace, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared normalised distances between rows of ``A`` and ``B``.

    Continuous/integer coordinates are scaled to [0, 1]; a categorical
    coordinate contributes 0 when levels match and 1 otherwise.
    """
    ZA, ZB = space.normalize(A), space.normalize(B)
    cat = space.categorical_mask()
    D = np.empty((ZA.shape[0], ZB.shape[0]))
    # explicit differences (not the expanded quadratic form) so coincident points give exactly 0
    chunk = max(1, 2_000_000 // max(1, ZB.size))
    for s in range(0, ZA.shape[0], chunk):
        diff = ZA[s:s + chunk, None, :] - ZB[None, :, :]
        diff[..., cat] = diff[..., cat] != 0
        D[s:s + chunk] = (diff * diff).sum(axis=2)
    return D


@dataclass
class DesignMatrix:
    space: DesignSpace
    values: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = self.space.check(self.values)
        if self.values.shape[0] < 1:
            raise DataContractError("a design needs at least one row")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, DesignMatrix)
            and self.space == other.space
            and self.seed == other.seed
            and np.array_equal(self.values, other.values)
        )

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.space.index(name)]

    def rows_as_text(self) -> list[list[str]]:
        return [
            [var.format_value(v) for var, v in zip(self.space.variables, row)]
            for row in self.values
        ]

    def sidecar(self, extra: dict | None = None) -> dict:
        d = {"space": self.space.to_dict(), "seed": int(self.seed),
             "space_fingerprint": self.space.fingerprint(), "m": self.m}
        d.update(self.meta)
        if extra:
            d.update(extra)
        return d

    def write(self, csv_path: str | Path, extra: dict | None = None) -> Path:
        """Write ``<name>.csv`` plus the ``<name>.json`` sidecar; return the sidecar path."""
        csv_path = Path(csv_path)
        io.write_csv(csv_path, self.space.names, self.rows_as_text())
        side = csv_path.with_suffix(".json")
        payload = self.sidecar(extra)
        payload["doe_fingerprint"] = io.file_fingerprint(csv_path)
        io.write_json(side, payload)
        return side

    @classmethod
    def read(cls, csv_path: str | Path, space: DesignSpace | None = None) -> "DesignMatrix":
        csv_path = Path(csv_path)
        side_path = csv_path.with_suffix(".json")
        side = io.read_json(side_path) if side_path.exists() else {}
        if space is None:
            if "space" not in side:
                raise DataContractError(f"{csv_path}: no design space given and no sidecar found")
            space = DesignSpace.from_dict(side["space"])
        elif "space_fingerprint" in side and side["space_fingerprint"] != space.fingerprint():
            raise DataContractError(f"{csv_path}: sidecar space does not match the given space")
        if "doe_fingerprint" in side and side["doe_fingerprint"] != io.file_fingerprint(csv_path):
            raise DataContractError(f"{csv_path}: file content does not match its recorded fingerprint")
        header, rows = io.read_csv(csv_path)
        if header != space.names:
            raise DataContractError(f"{csv_path}: columns {header} do not match space {space.names}")
        values = np.array(
            [[var.parse_value(s) for var, s in zip(space.variables, row)] for row in rows],
            dtype=float,
        ).reshape(len(rows), space.n)
        meta = {k: side[k] for k in ("inner_row_indices",) if k in side}
        return cls(space, values, int(side.get("seed", 0)), meta)
