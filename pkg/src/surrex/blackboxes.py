"""Named blackboxes: the Schelling simulator and an analytic mixed-variable test function."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from surrex import schelling
from surrex.dataset import REAL, Dataset
from surrex.errors import DataContractError, DomainError
from surrex.space import DesignMatrix, DesignSpace, VariableSpec


@dataclass(frozen=True)
class MixedTestSpec:
    """f(x) = a_l + b_l*x1 + c_l*sin(pi*x2) + d*x1*x2 with (a, b, c) taken from the level-l row."""

    table: tuple[tuple[float, float, float], ...] = ((0.0, 1.0, 0.0), (1.0, 0.0, 1.0), (-1.0, 2.0, 2.0))
    d: float = 0.5
    levels: tuple[str, ...] = field(default=("level0", "level1", "level2"))

    def __post_init__(self):
        if len(self.table) != len(self.levels):
            raise DataContractError("coefficient table needs one row per level")

    def space(self) -> DesignSpace:
        return DesignSpace((
            VariableSpec.continuous("x1", 0.0, 1.0),
            VariableSpec.continuous("x2", 0.0, 1.0),
            VariableSpec.categorical("arch", self.levels),
        ))


DEFAULT_MIXED = MixedTestSpec()
MIXED_SPACE = DEFAULT_MIXED.space()


def eval_mixed_batch(X: np.ndarray, spec: MixedTestSpec = DEFAULT_MIXED) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lvl = X[:, 2]
    if ((lvl < 0) | (lvl >= len(spec.table)) | (lvl != np.floor(lvl))).any():
        raise DomainError("unknown level in mixed-analytic input")
    coef = np.asarray(spec.table)[lvl.astype(int)]
    x1, x2 = X[:, 0], X[:, 1]
    return coef[:, 0] + coef[:, 1] * x1 + coef[:, 2] * np.sin(np.pi * x2) + spec.d * x1 * x2


def eval_mixed(x, spec: MixedTestSpec = DEFAULT_MIXED) -> float:
    return float(eval_mixed_batch(np.asarray(x, dtype=float)[None, :], spec)[0])


def simulate_mixed(design: DesignMatrix, reps: int, base_seed: int = 0, **_) -> Dataset:
    if design.space.names != MIXED_SPACE.names:
        raise DataContractError(f"design columns {design.space.names} do not match {MIXED_SPACE.names}")
    idx = np.repeat(np.arange(design.m), reps)
    X = design.values[idx]
    return Dataset(
        design.space,
        X,
        {"value": eval_mixed_batch(X)},
        config_ids=idx,
        reps=np.tile(np.arange(reps), design.m),
        target_types={"value": REAL},
        meta={"blackbox": "mixed-analytic", "reps": reps, "base_seed": int(base_seed)},
    )


def _simulate_schelling(design, reps, base_seed=0, max_iters=1000, jobs=1, **_):
    return schelling.simulate_doe(design, reps, base_seed, max_iters=max_iters, jobs=jobs)


BLACKBOXES = {
    "schelling": (schelling.SCHELLING_SPACE, _simulate_schelling),
    "mixed-analytic": (MIXED_SPACE, simulate_mixed),
}


def get_space(name: str) -> DesignSpace:
    try:
        return BLACKBOXES[name][0]
    except KeyError:
        raise DataContractError(f"unknown blackbox {name!r}; choose from {sorted(BLACKBOXES)}") from None


def evaluate(name: str, design: DesignMatrix, reps: int, base_seed: int = 0,
             max_iters: int = 1000, jobs: int = 1) -> Dataset:
    get_space(name)
    return BLACKBOXES[name][1](design, reps, base_seed=base_seed, max_iters=max_iters, jobs=jobs)
