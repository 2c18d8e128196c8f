import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from surrex.agreement import (AgreementMatrix, Dendrogram, cluster_average_linkage, dissimilarity,
                              ndcg_matrix, ndcg_pair, ndcg_rows)
from surrex.xai import ShapResult


def shap(phi, ids=None):
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    return ShapResult(np.zeros(phi.shape[0]), phi,
                      instance_ids=np.arange(phi.shape[0]) if ids is None else np.asarray(ids))


def block_distances(sizes, within, across, jitter=0.0, seed=0):
    k = sum(sizes)
    lab = np.repeat(np.arange(len(sizes)), sizes)
    D = np.where(lab[:, None] == lab[None, :], within, across).astype(float)
    if jitter:
        J = np.random.default_rng(seed).uniform(0, jitter, (k, k))
        D = D + (J + J.T) / 2
    np.fill_diagonal(D, 0.0)
    return D, lab


phis = st.integers(1, 6).flatmap(lambda n: st.lists(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n), min_size=1, max_size=8))


# -- NDCG -----------------------------------------------------------------------------

def test_ndcg_examples():
    ref = shap([[3.0, 1.0]])
    assert ndcg_pair(ref, ref) == 1.0
    val = (1 + 3 / np.log2(3)) / (3 + 1 / np.log2(3))
    assert ndcg_pair(shap([[1.0, 3.0]]), ref) == pytest.approx(val, abs=1e-12)
    assert round(val, 5) == 0.79671
    assert ndcg_pair(shap([[1.0, 2.0]]), shap([[0.0, 0.0]])) == 1.0
    with pytest.raises(ValueError):
        ndcg_pair(shap([[1.0, 2.0]]), shap([[1.0, 2.0, 3.0]]))


def test_ndcg_ties_break_by_feature_index():
    # candidate ties put feature 0 first
    assert ndcg_rows(shap([[1.0, 1.0]]), shap([[1.0, 5.0]]))[0] == pytest.approx(
        (1 + 5 / np.log2(3)) / (5 + 1 / np.log2(3)))


@given(phis)
def test_ndcg_self_and_bounds(rows):
    a = shap(rows)
    assert ndcg_pair(a, a) == pytest.approx(1.0, abs=1e-15)
    b = shap(np.roll(np.asarray(rows), 1, axis=1))
    v = ndcg_pair(b, a)
    assert 0 < v <= 1 + 1e-12 or np.all(np.asarray(rows) == 0)


@given(phis, st.randoms())
def test_ndcg_permutation_equivariance(rows, rnd):
    arr = np.asarray(rows)
    other = np.asarray(rows)[::-1] if len(rows) > 1 else arr * 0.5 + 1
    perm = list(range(arr.shape[1]))
    rnd.shuffle(perm)
    a, b = arr, other
    base = ndcg_rows(a, b)
    # tie-breaking follows feature index, so only rows without tied |phi| are relabeling-invariant
    tie_free = [len(set(np.abs(r))) == len(r) for r in a]
    moved = ndcg_rows(a[:, perm], b[:, perm])
    assert np.allclose(base[tie_free], moved[tie_free], atol=1e-12)


def test_matrix_examples():
    a = shap([[3.0, 1.0], [2.0, 0.5]])
    M = ndcg_matrix({"A": a, "B": shap(a.phi.copy())})
    assert np.all(M.values == 1.0)
    rev = ndcg_matrix({"A": a, "B": shap(a.phi[:, ::-1])})
    assert np.all(np.diag(rev.values) == 1.0)
    assert rev.values[0, 1] < 1 and rev.values[1, 0] < 1
    with pytest.raises(ValueError):
        ndcg_matrix({"A": a, "B": shap(a.phi, ids=[5, 6])})
    with pytest.raises(ValueError):
        ndcg_matrix({"A": a})


def test_matrix_csv_percent(tmp_path):
    M = AgreementMatrix(["A", "B"], np.array([[1.0, 0.79671], [0.8, 1.0]]))
    M.write(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == ["model,A,B", "A,100.0,79.7", "B,80.0,100.0"]


def test_dissimilarity_examples():
    assert np.all(dissimilarity(np.ones((3, 3))) == 0)
    D = dissimilarity(np.array([[1.0, 0.8], [0.6, 1.0]]))
    assert D[0, 1] == pytest.approx(0.3) and D[1, 0] == D[0, 1]
    assert D[0, 0] == 0.0


# -- clustering -----------------------------------------------------------------------

def test_linkage_examples():
    one = cluster_average_linkage(np.array([[0, 0.4], [0.4, 0]]))
    assert [(m.left, m.right, m.height, m.size) for m in one.merges] == [(0, 1, 0.4, 2)]
    D, _ = block_distances([2, 2], 0.1, 1.0)
    den = cluster_average_linkage(D, list("abcd"))
    assert [(m.left, m.right, m.height) for m in den.merges] == [(0, 1, 0.1), (2, 3, 0.1), (4, 5, 1.0)]
    assert den.top_split() == ({"a", "b"}, {"c", "d"})
    zero = cluster_average_linkage(np.zeros((4, 4)))
    assert all(m.height == 0 for m in zero.merges) and len(zero.merges) == 3


def test_linkage_rejects_asymmetric():
    with pytest.raises(ValueError):
        cluster_average_linkage(np.array([[0, 0.1], [0.2, 0]]))


@settings(max_examples=40)
@given(st.integers(2, 9), st.integers(0, 10_000))
def test_linkage_matches_scipy_and_is_monotone(k, seed):
    pts = np.random.default_rng(seed).random((k, 3))
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    den = cluster_average_linkage(D)
    ref = linkage(squareform(D, checks=False), method="average")
    heights = [m.height for m in den.merges]
    assert np.allclose(heights, ref[:, 2], atol=1e-12)
    assert all(b >= a - 1e-12 for a, b in zip(heights, heights[1:]))
    assert [m.size for m in den.merges] == ref[:, 3].astype(int).tolist()
    # same merge partitions, irrespective of left/right order
    ours = [frozenset(den.members(k + i)) for i in range(k - 1)]
    Z = Dendrogram([str(i) for i in range(k)], [])
    theirs, members = [], {i: {i} for i in range(k)}
    for i, row in enumerate(ref):
        members[k + i] = members[int(row[0])] | members[int(row[1])]
        theirs.append(frozenset(members[k + i]))
    assert ours == theirs
    assert Z.top_split() == (set(Z.labels), set())


@settings(max_examples=30)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=4), st.integers(0, 1000))
def test_planted_blocks_recovered(sizes, seed):
    D, lab = block_distances(sizes, 0.1, 0.9, jitter=0.05, seed=seed)
    names = [f"m{i}" for i in range(len(lab))]
    den = cluster_average_linkage(D, names)
    groups = den.cut(0.5)
    planted = sorted(({names[i] for i in np.flatnonzero(lab == g)} for g in range(len(sizes))), key=sorted)
    assert groups == planted


def test_two_block_top_split_from_shap():
    r = np.random.default_rng(0)
    base_a, base_b = np.array([5.0, 3, 1, 0.5]), np.array([0.5, 1, 3, 5.0])
    res = {}
    for name, base in [("A1", base_a), ("A2", base_a), ("A3", base_a), ("B1", base_b), ("B2", base_b)]:
        res[name] = shap(base * r.uniform(0.9, 1.1, (20, 4)))
    den = cluster_average_linkage(dissimilarity(ndcg_matrix(res)), list(res))
    assert sorted(map(sorted, den.top_split())) == [["A1", "A2", "A3"], ["B1", "B2"]]


def test_dendrogram_json_roundtrip(tmp_path):
    D, _ = block_distances([2, 3], 0.2, 0.7)
    den = cluster_average_linkage(D, list("abcde"))
    den.write(tmp_path / "d.json")
    from surrex import io
    back = Dendrogram.from_dict(io.read_json(tmp_path / "d.json"))
    assert back == den
    assert set(io.read_json(tmp_path / "d.json")["merges"][0]) == {"left", "right", "height", "size"}
