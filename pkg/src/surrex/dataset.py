"""Replicated simulation records: a design matrix plus named output columns."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from surrex import io
from surrex.errors import DataContractError
from surrex.space import DesignSpace

# column type tags used in the CSV sidecar
BINARY = "binary"
COUNT = "count"
REAL = "real"


@dataclass
class Dataset:
    space: DesignSpace
    X: np.ndarray
    targets: dict[str, np.ndarray]
    config_ids: np.ndarray
    reps: np.ndarray
    target_types: dict[str, str] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = self.space.check(self.X) if len(self.X) else np.empty((0, self.space.n))
        m = self.X.shape[0]
        self.config_ids = np.asarray(self.config_ids, dtype=int)
        self.reps = np.asarray(self.reps, dtype=int)
        self.targets = {k: np.asarray(v) for k, v in self.targets.items()}
        for name, col in [("config_ids", self.config_ids), ("reps", self.reps), *self.targets.items()]:
            if len(col) != m:
                raise DataContractError(f"column {name} has length {len(col)}, expected {m}")
        for name in self.targets:
            self.target_types.setdefault(name, REAL)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def y_sparsity(self) -> np.ndarray:
        return self.targets["sparsity"]

    @property
    def y_converged(self) -> np.ndarray:
        return self.targets["converged"].astype(bool)

    @property
    def y_iterations(self) -> np.ndarray:
        return self.targets["iterations"]

    def target(self, name: str) -> np.ndarray:
        try:
            return np.asarray(self.targets[name], dtype=float)
        except KeyError:
            raise DataContractError(f"dataset has no target {name!r}; has {list(self.targets)}") from None

    def unique_configs(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct config ids (sorted) and the matching design rows."""
        ids, first = np.unique(self.config_ids, return_index=True)
        return ids, self.X[first]

    def check_replicates(self) -> None:
        for cid in np.unique(self.config_ids):
            rows = self.X[self.config_ids == cid]
            if not (rows == rows[0]).all():
                raise DataContractError(f"replicates of config {cid} have different inputs")

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            self.space,
            self.X[mask],
            {k: v[mask] for k, v in self.targets.items()},
            self.config_ids[mask],
            self.reps[mask],
            dict(self.target_types),
            dict(self.meta),
        )

    def select_configs(self, ids) -> "Dataset":
        return self.subset(np.isin(self.config_ids, np.asarray(list(ids), dtype=int)))

    def fingerprint(self) -> str:
        cols = [self.X, self.config_ids, self.reps]
        cols += [np.asarray(self.targets[k], dtype=float) for k in sorted(self.targets)]
        return io.array_fingerprint(*cols)

    # -- CSV ------------------------------------------------------------------

    def header(self) -> list[str]:
        return ["config_id", "rep", *self.space.names, *self.targets]

    def _format_target(self, name: str, v) -> str:
        kind = self.target_types[name]
        if kind in (BINARY, COUNT):
            return str(int(v))
        return io.fmt_real(v)

    def write(self, csv_path: str | Path, extra: dict | None = None) -> Path:
        csv_path = Path(csv_path)
        rows = []
        for i in range(self.m):
            row = [str(self.config_ids[i]), str(self.reps[i])]
            row += [var.format_value(v) for var, v in zip(self.space.variables, self.X[i])]
            row += [self._format_target(k, self.targets[k][i]) for k in self.targets]
            rows.append(row)
        io.write_csv(csv_path, self.header(), rows)
        side = dict(self.meta)
        side.update(extra or {})
        side.update(
            space=self.space.to_dict(),
            space_fingerprint=self.space.fingerprint(),
            targets=[{"name": k, "type": self.target_types[k]} for k in self.targets],
            dataset_fingerprint=io.file_fingerprint(csv_path),
            content_fingerprint=self.fingerprint(),
        )
        side_path = csv_path.with_suffix(".json")
        io.write_json(side_path, side)
        return side_path

    @classmethod
    def read(cls, csv_path: str | Path) -> "Dataset":
        csv_path = Path(csv_path)
        side_path = csv_path.with_suffix(".json")
        if not side_path.exists():
            raise DataContractError(f"{csv_path}: missing sidecar {side_path.name}")
        side = io.read_json(side_path)
        if side.get("dataset_fingerprint") != io.file_fingerprint(csv_path):
            raise DataContractError(f"{csv_path}: content does not match its recorded fingerprint")
        space = DesignSpace.from_dict(side["space"])
        tnames = [t["name"] for t in side["targets"]]
        ttypes = {t["name"]: t["type"] for t in side["targets"]}
        header, rows = io.read_csv(csv_path)
        expected = ["config_id", "rep", *space.names, *tnames]
        if header != expected:
            raise DataContractError(f"{csv_path}: columns {header} != expected {expected}")
        n = space.n
        ids = np.array([int(r[0]) for r in rows], dtype=int)
        reps = np.array([int(r[1]) for r in rows], dtype=int)
        X = np.array(
            [[var.parse_value(s) for var, s in zip(space.variables, r[2 : 2 + n])] for r in rows],
            dtype=float,
        ).reshape(len(rows), n)
        targets = {}
        for j, name in enumerate(tnames):
            col = [r[2 + n + j] for r in rows]
            if ttypes[name] in (BINARY, COUNT):
                targets[name] = np.array([int(s) for s in col], dtype=int)
            else:
                targets[name] = np.array([float(s) for s in col], dtype=float)
        meta = {k: v for k, v in side.items()
                if k not in ("space", "targets", "dataset_fingerprint", "content_fingerprint")}
        return cls(space, X, targets, ids, reps, ttypes, meta)
