import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrex.doe import lhs_sample
from surrex.errors import DataContractError
from surrex.schelling import (DIFFERENT_AT_MOST, EMPTY, SCHELLING_SPACE, SIMILAR_AT_LEAST, Grid,
                              SchellingConfig, init_grid, is_happy, neighborhood, run, similarity,
                              simulate_doe, sparsity, step)

LITERAL = DIFFERENT_AT_MOST


def cfg(**kw):
    base = dict(n_types=2, density=0.5, intolerance=0.3, grid_edge=10, perception=1.0, seed=0)
    base.update(kw)
    return SchellingConfig(**base)


def grid_from(rows):
    return Grid(len(rows), np.array(rows, dtype=np.int64))


def brute_sparsity(grid, d):
    c = grid.edge
    vals = []
    for i in range(c):
        for j in range(c):
            me = grid.cells[i, j]
            if me == EMPTY:
                continue
            s, q, w = 1, 0, 0
            for k in range(c):
                for l in range(c):
                    if (k, l) == (i, j) or (k - i) ** 2 + (l - j) ** 2 > d * d:
                        continue
                    t = grid.cells[k, l]
                    if t == EMPTY:
                        w += 1
                    elif t == me:
                        s += 1
                    else:
                        q += 1
            vals.append((q + w) / s)
    return float(np.mean(vals))


# -- init_grid -------------------------------------------------------------------------

def test_full_density_fills_grid():
    g = init_grid(cfg(density=1.0))
    assert g.n_agents == 100


def test_agent_count_floor():
    assert init_grid(cfg(grid_edge=30, density=0.6)).n_agents == 540


def test_init_deterministic():
    assert init_grid(cfg(seed=4)) == init_grid(cfg(seed=4))
    assert init_grid(cfg(seed=4)) != init_grid(cfg(seed=5))


def test_config_validation():
    with pytest.raises(DataContractError):
        cfg(n_types=6)
    with pytest.raises(DataContractError):
        cfg(max_iters=0)
    with pytest.raises(DataContractError):
        cfg(rule="strict")


# -- neighborhood ----------------------------------------------------------------------

def test_neighborhood_examples():
    g = grid_from([[EMPTY] * 5] * 5)
    assert sorted(neighborhood(g, (2, 2), 1.0)) == [(1, 2), (2, 1), (2, 3), (3, 2)]
    assert len(neighborhood(g, (2, 2), 1.5)) == 8
    assert len(neighborhood(g, (0, 0), 1.0)) == 2
    assert len(neighborhood(g, (4, 4), 1.0)) == 2


# -- is_happy --------------------------------------------------------------------------

def test_happy_literal_rule():
    g = grid_from([[EMPTY, 0, EMPTY], [0, 0, 1], [EMPTY, 0, EMPTY]])
    assert is_happy(g, (1, 1), 0.33, 1.0, LITERAL)  # 1/4 different
    assert not is_happy(g, (1, 1), 0.2, 1.0, LITERAL)
    assert is_happy(g, (1, 2), 1.0, 1.0, LITERAL)
    lone = grid_from([[EMPTY, EMPTY, EMPTY], [EMPTY, 1, EMPTY], [EMPTY, EMPTY, EMPTY]])
    assert is_happy(lone, (1, 1), 0.0, 1.0, LITERAL)


def test_happy_default_rule():
    g = grid_from([[EMPTY, 0, EMPTY], [0, 0, 1], [EMPTY, 0, EMPTY]])
    assert is_happy(g, (1, 1), 0.75, 1.0)  # 3/4 similar
    assert not is_happy(g, (1, 1), 0.76, 1.0)
    assert is_happy(g, (1, 2), 0.0, 1.0)
    lone = grid_from([[EMPTY, EMPTY, EMPTY], [EMPTY, 1, EMPTY], [EMPTY, EMPTY, EMPTY]])
    assert is_happy(lone, (1, 1), 1.0, 1.0)


def test_happy_rules_agree_on_two_types():
    # with two types, different <= t is similar >= 1 - t
    g = init_grid(cfg(density=0.7, seed=3))
    for cell in zip(*np.nonzero(g.cells != EMPTY)):
        for t in (0.0, 0.25, 0.5, 1.0):
            assert is_happy(g, cell, t, 1.5, LITERAL) == is_happy(g, cell, 1 - t, 1.5, SIMILAR_AT_LEAST)


# -- step ------------------------------------------------------------------------------

def test_step_fixpoint_when_tolerant():
    g = init_grid(cfg(density=0.8, seed=1))
    rng = np.random.default_rng(0)
    g2, moved = step(g, cfg(intolerance=1.0, rule=LITERAL), rng)
    assert moved == 0 and g2 == g
    g3, moved = step(g, cfg(intolerance=0.0), rng)
    assert moved == 0 and g3 == g


def test_step_two_agents_relocate():
    g = grid_from([[EMPTY, EMPTY, EMPTY], [EMPTY, 0, 1], [EMPTY, EMPTY, EMPTY]])
    g2, moved = step(g, cfg(intolerance=0.0, rule=LITERAL), np.random.default_rng(7))
    assert moved == 2
    assert g2.n_agents == 2
    assert sorted(g2.cells[g2.cells != EMPTY].tolist()) == [0, 1]


def test_step_full_grid_counts_stuck_agents():
    g = grid_from([[0, 1], [1, 0]])
    g2, moved = step(g, cfg(intolerance=0.0, rule=LITERAL), np.random.default_rng(0))
    assert moved == 4 and g2 == g


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(0, 1), st.sampled_from([1.0, 1.5, 2.3, 6.0]))
def test_step_conserves_agents(seed, density, tol, d):
    c = cfg(density=density, intolerance=tol, perception=d, n_types=3, seed=seed)
    g = init_grid(c)
    counts = g.type_counts(3)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        g, moved = step(g, c, rng)
        assert np.array_equal(g.type_counts(3), counts)
        assert g.n_agents == c.n_agents


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_fixpoint_is_stable(seed):
    c = cfg(density=0.5, intolerance=0.4, n_types=2, seed=seed, max_iters=500)
    rng = np.random.default_rng(seed)
    g = init_grid(c)
    for _ in range(500):
        g, moved = step(g, c, rng)
        if moved == 0:
            break
    if moved == 0:
        g2, again = step(g, c, rng)
        assert again == 0 and g2 == g


# -- sparsity --------------------------------------------------------------------------

def test_sparsity_examples():
    assert sparsity(grid_from([[1] * 4] * 4), 2.5) == 0.0
    lone = grid_from([[EMPTY] * 3, [EMPTY, 0, EMPTY], [EMPTY] * 3])
    assert sparsity(lone, 1.0) == 4.0
    pair = grid_from([[EMPTY] * 3, [EMPTY, 0, 1], [EMPTY] * 3])
    assert sparsity(pair, 1.0) == pytest.approx(3.5)


@settings(max_examples=60)
@given(st.integers(2, 5), st.integers(0, 10_000), st.floats(1.0, 4.0))
def test_sparsity_matches_brute_force(edge, seed, d):
    r = np.random.default_rng(seed)
    cells = r.integers(-1, 3, size=(edge, edge))
    if (cells == EMPTY).all():
        cells[0, 0] = 0
    g = Grid(edge, cells.astype(np.int64))
    assert sparsity(g, d) == pytest.approx(brute_sparsity(g, d), rel=1e-12)


def test_sparsity_fft_path_matches_brute_force():
    # a radius of 5 uses the FFT counter
    r = np.random.default_rng(0)
    g = Grid(5, r.integers(-1, 2, size=(5, 5)).astype(np.int64))
    assert sparsity(g, 5.0) == pytest.approx(brute_sparsity(g, 5.0), rel=1e-12)
    assert similarity(grid_from([[0, 0], [0, 0]]), 1.0) == 1.0


# -- run -------------------------------------------------------------------------------

def test_run_tolerant_converges_immediately():
    for seed in range(5):
        out = run(cfg(intolerance=1.0, rule=LITERAL, seed=seed))
        assert out.converged and out.iterations == 0
        out = run(cfg(intolerance=0.0, seed=seed))
        assert out.converged and out.iterations == 0


def test_run_two_isolated_agents():
    out = run(cfg(density=0.02, grid_edge=10, intolerance=0.5))
    assert out.converged
    out = run(cfg(density=0.02, grid_edge=10, intolerance=0.5, rule=LITERAL))
    assert out.converged


def test_run_outcome_invariants():
    for seed in range(6):
        c = cfg(density=0.9, intolerance=0.7, n_types=4, max_iters=5, seed=seed)
        out = run(c)
        assert out.iterations <= c.max_iters
        if not out.converged:
            assert out.iterations == c.max_iters
        assert out.sparsity >= 0 and 0 <= out.similarity <= 1
        assert run(c) == out


def test_run_reference_scenario():
    its, sp = [], []
    for seed in range(20):
        out = run(SchellingConfig(3, 0.6, 0.33, 30, 3.0, seed=seed))
        assert out.converged
        its.append(out.iterations)
        sp.append(out.sparsity)
    assert 5 <= np.median(its) <= 60
    assert 1.0 <= np.median(sp) <= 2.0


# -- simulate_doe ----------------------------------------------------------------------

def test_simulate_doe_shape_and_determinism():
    d = lhs_sample(SCHELLING_SPACE, 4, 3)
    a = simulate_doe(d, 2, 5, max_iters=30)
    assert a.m == 8
    assert a.config_ids.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]
    assert a.reps.tolist() == [0, 1] * 4
    b = simulate_doe(d, 2, 5, max_iters=30, jobs=2)
    assert a.fingerprint() == b.fingerprint()
    assert simulate_doe(d, 2, 6, max_iters=30).fingerprint() != a.fingerprint()


def test_simulate_doe_rejects_wrong_columns(mixed_train):
    from surrex.blackboxes import MIXED_SPACE
    with pytest.raises(DataContractError):
        simulate_doe(lhs_sample(MIXED_SPACE, 3, 0), 1, 0)
