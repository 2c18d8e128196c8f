"""Seedable Schelling residential-segregation simulator.

Agents live on a bounded c x c lattice. An agent's neighbourhood is every
other cell whose centre lies within Euclidean distance ``perception``.
Happiness is judged on the grid as it stood at the start of a step; the
unhappy agents then move, one at a time in shuffled order, to a random cell
that is empty at that moment.

Two happiness rules are available. ``"similar_at_least"`` (the default, as in
the GAMA library model) makes an agent happy when the fraction of similar
agent-neighbours is at least ``intolerance``. ``"different_at_most"`` makes it
happy when the fraction of different agent-neighbours is at most
``intolerance``. Agents without agent-neighbours are always happy.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal, sparse

from surrex.dataset import BINARY, COUNT, REAL, Dataset
from surrex.errors import DataContractError, SurrexError
from surrex.space import DesignMatrix, DesignSpace, VariableSpec

EMPTY = -1

SCHELLING_SPACE = DesignSpace((
    VariableSpec.integer("n_types", 2, 5),
    VariableSpec.continuous("density", 0.01, 1.0),
    VariableSpec.continuous("intolerance", 0.0, 1.0),
    VariableSpec.integer("grid_edge", 10, 40),
    VariableSpec.continuous("perception", 1.0, 10.0),
))

SIMILAR_AT_LEAST = "similar_at_least"
DIFFERENT_AT_MOST = "different_at_most"
RULES = (SIMILAR_AT_LEAST, DIFFERENT_AT_MOST)

TARGETS = ("converged", "iterations", "sparsity", "similarity")
TARGET_TYPES = {"converged": BINARY, "iterations": COUNT, "sparsity": REAL, "similarity": REAL}


class SimulationError(SurrexError):
    pass


def n_agents(density: float, edge: int) -> int:
    # tolerance keeps e.g. 0.29 * 100 from flooring to 28
    return int(math.floor(density * edge * edge + 1e-9))


@dataclass(frozen=True)
class SchellingConfig:
    n_types: int
    density: float
    intolerance: float
    grid_edge: int
    perception: float
    max_iters: int = 1000
    seed: int = 0
    rule: str = SIMILAR_AT_LEAST

    def __post_init__(self):
        if self.rule not in RULES:
            raise DataContractError(f"unknown happiness rule {self.rule!r}")
        if not 2 <= self.n_types <= 5:
            raise DataContractError(f"n_types={self.n_types} outside [2, 5]")
        if not 0.01 <= self.density <= 1.0:
            raise DataContractError(f"density={self.density} outside [0.01, 1]")
        if not 0.0 <= self.intolerance <= 1.0:
            raise DataContractError(f"intolerance={self.intolerance} outside [0, 1]")
        if not 10 <= self.grid_edge <= 40:
            raise DataContractError(f"grid_edge={self.grid_edge} outside [10, 40]")
        if not 1.0 <= self.perception <= 10.0:
            raise DataContractError(f"perception={self.perception} outside [1, 10]")
        if self.max_iters < 1:
            raise DataContractError("max_iters must be >= 1")
        if n_agents(self.density, self.grid_edge) < 1:
            raise DataContractError("configuration places no agents")

    @property
    def n_agents(self) -> int:
        return n_agents(self.density, self.grid_edge)


@dataclass
class Grid:
    edge: int
    cells: np.ndarray  # (edge, edge) int, EMPTY or a type label

    def copy(self) -> "Grid":
        return Grid(self.edge, self.cells.copy())

    def __eq__(self, other):
        return isinstance(other, Grid) and self.edge == other.edge and np.array_equal(self.cells, other.cells)

    @property
    def n_agents(self) -> int:
        return int((self.cells != EMPTY).sum())

    def type_counts(self, n_types: int) -> np.ndarray:
        return np.bincount(self.cells[self.cells != EMPTY], minlength=n_types)


@dataclass(frozen=True)
class SimOutcome:
    converged: bool
    iterations: int
    sparsity: float
    similarity: float


def neighbor_offsets(d: float) -> list[tuple[int, int]]:
    r = int(math.floor(d))
    lim = d * d + 1e-12
    return [(di, dj) for di in range(-r, r + 1) for dj in range(-r, r + 1)
            if (di or dj) and di * di + dj * dj <= lim]


def neighborhood(grid: Grid, cell: tuple[int, int], d: float) -> list[tuple[int, int]]:
    """Cells other than ``cell`` within distance ``d``, clipped at the grid border."""
    i, j = cell
    c = grid.edge
    return [(i + di, j + dj) for di, dj in neighbor_offsets(d)
            if 0 <= i + di < c and 0 <= j + dj < c]


class _Counter:
    """Per-cell neighbour counts by type, via sparse adjacency or FFT convolution."""

    def __init__(self, edge: int, d: float):
        self.edge = edge
        offsets = neighbor_offsets(d)
        r = int(math.floor(d))
        kernel = np.zeros((2 * r + 1, 2 * r + 1))
        for di, dj in offsets:
            kernel[di + r, dj + r] = 1.0
        self.kernel = kernel
        self.use_fft = len(offsets) > 48
        c = edge
        if not self.use_fft:
            cells = np.arange(c * c)
            ci, cj = np.divmod(cells, c)
            rows, cols = [], []
            for di, dj in offsets:
                ni, nj = ci + di, cj + dj
                ok = (ni >= 0) & (ni < c) & (nj >= 0) & (nj < c)
                rows.append(cells[ok])
                cols.append((ni * c + nj)[ok])
            rows, cols = np.concatenate(rows), np.concatenate(cols)
            self.adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(c * c, c * c))
            self.size = np.asarray(self.adj.sum(1)).ravel().astype(np.int64)
        else:
            self.size = self._conv(np.ones((1, c, c)))[0].ravel()

    def _conv(self, stack: np.ndarray) -> np.ndarray:
        out = signal.fftconvolve(stack, self.kernel[None], mode="same", axes=(1, 2))
        return np.rint(out).astype(np.int64)

    def counts(self, flat: np.ndarray, n_types: int) -> np.ndarray:
        """(c*c, n_types) array of agent neighbours of each type."""
        onehot = (flat[:, None] == np.arange(n_types)[None, :]).astype(float)
        if not self.use_fft:
            return np.rint(self.adj @ onehot).astype(np.int64)
        c = self.edge
        stack = onehot.T.reshape(n_types, c, c)
        return self._conv(stack).reshape(n_types, c * c).T


@lru_cache(maxsize=64)
def _counter(edge: int, d: float) -> _Counter:
    return _Counter(edge, d)


def _init_cells(config: SchellingConfig, rng: np.random.Generator) -> np.ndarray:
    c = config.grid_edge
    flat = np.full(c * c, EMPTY, dtype=np.int64)
    where = rng.choice(c * c, size=config.n_agents, replace=False)
    flat[where] = rng.integers(0, config.n_types, size=config.n_agents)
    return flat


def init_grid(config: SchellingConfig) -> Grid:
    rng = np.random.default_rng(config.seed)
    c = config.grid_edge
    return Grid(c, _init_cells(config, rng).reshape(c, c))


def _agent_stats(flat: np.ndarray, counter: _Counter, n_types: int):
    counts = counter.counts(flat, n_types)
    agents = np.flatnonzero(flat != EMPTY)
    a = counts[agents].sum(1)
    same = counts[agents, flat[agents]]
    return agents, a, same, counter.size[agents]


def _happy_mask(a, same, intolerance, rule):
    denom = np.maximum(a, 1)
    if rule == SIMILAR_AT_LEAST:
        ok = same / denom >= intolerance
    else:
        ok = (a - same) / denom <= intolerance
    return (a == 0) | ok


def _unhappy(flat, counter, config: SchellingConfig) -> np.ndarray:
    agents, a, same, _ = _agent_stats(flat, counter, config.n_types)
    return agents[~_happy_mask(a, same, config.intolerance, config.rule)]


def is_happy(
    grid: Grid,
    agent_cell: tuple[int, int],
    intolerance: float,
    d: float,
    rule: str = SIMILAR_AT_LEAST,
) -> bool:
    me = grid.cells[agent_cell]
    if me == EMPTY:
        raise ValueError(f"cell {agent_cell} is empty")
    types = [grid.cells[c] for c in neighborhood(grid, agent_cell, d)]
    a = sum(t != EMPTY for t in types)
    same = sum(t == me for t in types)
    return bool(_happy_mask(np.array([a]), np.array([same]), intolerance, rule)[0])


def _step_inplace(flat, counter, config: SchellingConfig, rng: np.random.Generator) -> int:
    movers = _unhappy(flat, counter, config)
    k = len(movers)
    if k == 0:
        return 0
    empties = np.flatnonzero(flat == EMPTY).tolist()
    if not empties:
        return k
    order = rng.permutation(movers).tolist()
    picks = rng.integers(0, len(empties), size=k).tolist()
    cells = flat.tolist()
    for src, p in zip(order, picks):
        dst = empties[p]
        cells[dst] = cells[src]
        cells[src] = EMPTY
        empties[p] = src
    flat[:] = cells
    return k


def step(grid: Grid, config: SchellingConfig, rng: np.random.Generator) -> tuple[Grid, int]:
    """One synchronous-evaluation, sequential-relocation step; returns (new grid, moved)."""
    flat = grid.cells.ravel().copy()
    moved = _step_inplace(flat, _counter(grid.edge, config.perception), config, rng)
    return Grid(grid.edge, flat.reshape(grid.edge, grid.edge)), moved


def _sparsity_from(flat, counter, n_types) -> float:
    agents, a, same, size = _agent_stats(flat, counter, n_types)
    q = a - same
    w = size - a
    return float(np.mean((q + w) / (same + 1.0)))


def _similarity_from(flat, counter, n_types) -> float:
    agents, a, same, _ = _agent_stats(flat, counter, n_types)
    has = a > 0
    if not has.any():
        return 1.0
    return float(np.mean(same[has] / a[has]))


def sparsity(grid: Grid, d: float) -> float:
    """Mean over agents of (different + vacant neighbours) / (similar neighbours + 1)."""
    flat = grid.cells.ravel()
    if not (flat != EMPTY).any():
        raise ValueError("sparsity needs at least one agent")
    n_types = int(flat.max()) + 1
    return _sparsity_from(flat, _counter(grid.edge, d), n_types)


def similarity(grid: Grid, d: float) -> float:
    flat = grid.cells.ravel()
    n_types = max(int(flat.max()) + 1, 1)
    return _similarity_from(flat, _counter(grid.edge, d), n_types)


def run(config: SchellingConfig) -> SimOutcome:
    """Iterate until nobody moves or ``max_iters`` moving steps have happened."""
    rng = np.random.default_rng(config.seed)
    flat = _init_cells(config, rng)
    counter = _counter(config.grid_edge, config.perception)
    iterations = 0
    converged = False
    has_room = (flat == EMPTY).any()
    while iterations < config.max_iters:
        moved = _step_inplace(flat, counter, config, rng)
        if moved == 0:
            converged = True
            break
        if not has_room:
            # nobody can relocate, so the grid is frozen with unhappy agents
            iterations = config.max_iters
            break
        iterations += 1
    else:
        converged = len(_unhappy(flat, counter, config)) == 0
    return SimOutcome(
        converged=converged,
        iterations=iterations,
        sparsity=_sparsity_from(flat, counter, config.n_types),
        similarity=_similarity_from(flat, counter, config.n_types),
    )


def derive_seed(base_seed: int, row: int, rep: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(row), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def config_from_row(
    space: DesignSpace, row: np.ndarray, max_iters: int, seed: int, rule: str = SIMILAR_AT_LEAST
) -> SchellingConfig:
    vals = dict(zip(space.names, row))
    try:
        return SchellingConfig(
            n_types=int(vals["n_types"]),
            density=float(vals["density"]),
            intolerance=float(vals["intolerance"]),
            grid_edge=int(vals["grid_edge"]),
            perception=float(vals["perception"]),
            max_iters=max_iters,
            seed=seed,
            rule=rule,
        )
    except KeyError as exc:
        raise DataContractError(f"design lacks Schelling variable {exc}") from None


def _run_task(task):
    row, rep, config = task
    try:
        return run(config)
    except Exception as exc:  # re-raised with row/rep context
        raise SimulationError(f"row {row} rep {rep}: {exc}") from exc


def simulate_doe(
    design: DesignMatrix,
    reps: int,
    base_seed: int,
    max_iters: int = 1000,
    jobs: int = 1,
    rule: str = SIMILAR_AT_LEAST,
) -> Dataset:
    """Run every design row ``reps`` times; records are ordered by (row, rep)."""
    if set(design.space.names) != set(SCHELLING_SPACE.names):
        raise DataContractError(
            f"design columns {design.space.names} do not match {SCHELLING_SPACE.names}")
    if reps < 1:
        raise DataContractError("reps must be >= 1")
    tasks = [
        (i, r, config_from_row(design.space, design.values[i], max_iters, derive_seed(base_seed, i, r), rule))
        for i in range(design.m) for r in range(reps)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_task, tasks, chunksize=4))
    else:
        outcomes = [_run_task(t) for t in tasks]
    idx = np.array([t[0] for t in tasks], dtype=int)
    ids = np.array(design.meta.get("config_ids", range(design.m)), dtype=int)[idx]
    return Dataset(
        space=design.space,
        X=design.values[idx],
        targets={
            "converged": np.array([o.converged for o in outcomes], dtype=int),
            "iterations": np.array([o.iterations for o in outcomes], dtype=int),
            "sparsity": np.array([o.sparsity for o in outcomes], dtype=float),
            "similarity": np.array([o.similarity for o in outcomes], dtype=float),
        },
        config_ids=ids,
        reps=np.array([t[1] for t in tasks], dtype=int),
        target_types=dict(TARGET_TYPES),
        meta={"blackbox": "schelling", "reps": reps, "base_seed": int(base_seed),
              "max_iters": max_iters, "rule": rule},
    )
