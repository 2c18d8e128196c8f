"""Acceptance criteria, each checked at its stated tolerance.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Criteria 7 to 10 share one full-scale pipeline run (200 configurations x 5
replications of the Schelling simulator, nested 50-configuration training split),
driven through the command-line interface.
"""

import itertools
import math
import time
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrex import io
from surrex.agreement import cluster_average_linkage, dissimilarity, ndcg_matrix, ndcg_pair
from surrex.blackboxes import MIXED_SPACE, simulate_mixed
from surrex.cli import main
from surrex.dataset import Dataset
from surrex.doe import lhs_sample, nested_lhs
from surrex.metrics import ConfusionCounts, mcc, pva, rank_models, rmse, MetricRow
from surrex.schelling import SchellingConfig, run
from surrex.space import CONTINUOUS, DesignSpace, VariableSpec
from surrex.surrogates import KINDS, conformal_calibrate, train
from surrex.xai import ShapResult, build_background, shap_values, shapley_exact

REFERENCE_SEED = 42
PIPELINE_BUDGET_S = 20 * 60


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"command failed with exit code {code}: {argv}"


# -- 1 ---------------------------------------------------------------------------------

def permutation_shapley(v, n):
    phi = np.zeros(n)
    for order in itertools.permutations(range(n)):
        S = frozenset()
        for i in order:
            phi[i] += v(S | {i}) - v(S)
            S = S | {i}
    return phi / factorial(n)


def test_1_shapley_oracle(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 5))
        vals = rng.normal(size=2 ** n) * 10
        v = lambda S, vals=vals: vals[sum(1 << i for i in S)]  # noqa: E731
        worst = max(worst, np.abs(shapley_exact(v, n) - permutation_shapley(v, n)).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5
    acceptance("1 Shapley oracle", ok, f"max |diff| {worst:.1e} (tol 1e-10), {elapsed:.2f} s (< 5 s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------------

def test_2_shap_efficiency(acceptance):
    train_data = simulate_mixed(lhs_sample(MIXED_SPACE, 40, 21), 2)
    xs = lhs_sample(MIXED_SPACE, 50, 22).values
    bg = build_background(train_data.X)
    eff, inter = 0.0, 0.0
    for kind in KINDS:
        model = train(train_data, kind)
        res = shap_values(model, xs, bg, interactions=True)
        eff = max(eff, np.abs(res.base + res.phi.sum(1) - model.predict_mean(xs)).max())
        inter = max(inter, np.abs(res.interactions.sum(-1) - res.phi).max())
    ok = eff <= 1e-8 and inter <= 1e-8
    acceptance("2 SHAP efficiency", ok, f"8 kinds x 50 instances: efficiency {eff:.1e}, interaction rows {inter:.1e} (tol 1e-8)")
    assert ok


# -- 3 ---------------------------------------------------------------------------------

def test_3_metric_arithmetic(acceptance):
    y, p = np.zeros(3), np.array([1.0, 2.0, 3.0])
    checks = {
        "rmse exact": rmse([1.0, 2.0], [1.0, 2.0]) == 0.0,
        "rmse sqrt(12.5)": rmse([0, 0], [3, 4]) == math.sqrt(12.5),
        "mcc perfect": mcc(ConfusionCounts(5, 5, 0, 0)) == 1.0,
        "mcc symmetric": mcc(ConfusionCounts(1, 1, 1, 1)) == 0.0,
        "mcc 1/3": mcc(ConfusionCounts(2, 2, 1, 1)) == pytest.approx(1 / 3, abs=1e-15),
        "mcc undefined": mcc(ConfusionCounts(4, 0, 3, 0)) is None,
        "pva 0": pva(y, p, p ** 2) == 0.0,
        "pva e": pva(y, p, p ** 2 / math.e) == pytest.approx(1.0, abs=1e-15),
        "pva 1/e": pva(y, p, p ** 2 * math.e) == pytest.approx(1.0, abs=1e-15),
    }
    rep = rank_models([MetricRow("A", 1.0, None, None, mcc_defined=False)])
    checks["undefined marker"] = rep.to_rows()[0][2] == "undefined"
    ranks = rank_models({"RF": {"rmse": 6.86}, "GP": {"rmse": 8.22}, "TabPFN": {"rmse": 4.31}})
    checks["ranks"] = [ranks.rank_of(m, "rmse") for m in ("RF", "GP", "TabPFN")] == [2, 3, 1]
    failed = [k for k, v in checks.items() if not v]
    acceptance("3 Metric arithmetic", not failed, f"{len(checks) - len(failed)}/{len(checks)} examples exact"
               + (f"; failed {failed}" if failed else ""))
    assert not failed


# -- 4 ---------------------------------------------------------------------------------

def test_4_ndcg_self_agreement(acceptance):
    rng = np.random.default_rng(4)
    exact = 0
    for _ in range(100):
        m, n = rng.integers(1, 30), rng.integers(1, 12)
        phi = rng.normal(size=(m, n)) * rng.exponential(size=n)
        s = ShapResult(np.zeros(m), phi)
        exact += ndcg_pair(s, s) == 1.0
    val = ndcg_pair(np.array([[1.0, 3.0]]), np.array([[3.0, 1.0]]))
    ok = exact == 100 and abs(val - 0.79671) <= 1e-5
    acceptance("4 NDCG self-agreement", ok, f"{exact}/100 exactly 1; reversed pair {val:.6f} vs 0.79671 (tol 1e-5)")
    assert ok


# -- 5 ---------------------------------------------------------------------------------

def strata_ok(space, X, m):
    for j, var in enumerate(space.variables):
        col = X[:, j]
        if var.kind == CONTINUOUS:
            idx = np.minimum(np.floor((col - var.lo) / (var.hi - var.lo) * m).astype(int), m - 1)
            if sorted(idx.tolist()) != list(range(m)):
                return False
        else:
            counts = np.array([(col == v).sum() for v in var.level_values()])
            if counts.sum() != m or not set(counts.tolist()) <= {m // var.n_levels, -(-m // var.n_levels)}:
                return False
    return True


def random_space(rng):
    out = []
    for i in range(int(rng.integers(1, 6))):
        kind = rng.integers(3)
        if kind == 0:
            lo = float(rng.uniform(-50, 50))
            out.append(VariableSpec.continuous(f"v{i}", lo, lo + float(rng.uniform(1e-3, 100))))
        elif kind == 1:
            lo = int(rng.integers(-5, 5))
            out.append(VariableSpec.integer(f"v{i}", lo, lo + int(rng.integers(1, 9))))
        else:
            out.append(VariableSpec.categorical(f"v{i}", [f"l{k}" for k in range(int(rng.integers(2, 6)))]))
    return DesignSpace(tuple(out))


def test_5_lhs_stratification(acceptance):
    rng = np.random.default_rng(5)
    single = nested = 0
    for _ in range(500):
        space = random_space(rng)
        m, seed = int(rng.integers(1, 80)), int(rng.integers(0, 2 ** 32))
        single += strata_ok(space, lhs_sample(space, m, seed).values, m)
        inner, ratio = int(rng.integers(1, 20)), int(rng.integers(1, 6))
        d, idx = nested_lhs(space, inner * ratio, inner, seed)
        nested += strata_ok(space, d.values, inner * ratio) and strata_ok(space, d.values[idx], inner)
    ok = single == 500 and nested == 500
    acceptance("5 LHS stratification", ok, f"{single}/500 single designs, {nested}/500 nested at both resolutions")
    assert ok


# -- 6 ---------------------------------------------------------------------------------

def test_6_schelling_reference_band(acceptance):
    t0 = time.perf_counter()
    outs = [run(SchellingConfig(3, 0.6, 0.33, 30, 3.0, seed=s)) for s in range(20)]
    elapsed = time.perf_counter() - t0
    conv = np.mean([o.converged for o in outs])
    it = float(np.median([o.iterations for o in outs]))
    sp = float(np.median([o.sparsity for o in outs]))
    ok = conv >= 0.9 and 5 <= it <= 60 and 1.0 <= sp <= 2.0 and elapsed < 30
    acceptance("6 Schelling reference band", ok,
               f"converged {conv:.0%} (>= 90%), median iterations {it:g} in [5, 60], "
               f"median sparsity {sp:.3f} in [1, 2], {elapsed:.1f} s (< 30 s)")
    assert ok


# -- 7 to 10: full-scale pipeline -------------------------------------------------------

@pytest.fixture(scope="session")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    t0 = time.perf_counter()
    cli("sample", "--run", root, "--space", "schelling", "--n", 200, "--nested", 50, "--seed", REFERENCE_SEED)
    cli("simulate", "--run", root, "--reps", 5, "--max-iters", 1000, "--seed", REFERENCE_SEED)
    t_sim = time.perf_counter() - t0
    cli("fit", "--run", root, "--models", ",".join(k.lower() for k in KINDS),
        "--targets", "sparsity,converged", "--seed", REFERENCE_SEED)
    for kind in KINDS:
        for target in ("converged", "sparsity"):
            cli("explain", "--run", root, "--model", f"{kind.lower()}_{target}", "--method", "shap",
                "--seed", REFERENCE_SEED)
    for target in ("converged", "sparsity"):
        cli("explain", "--run", root, "--model", f"rf_{target}", "--method", "importance", "--source", "mdi")
    elapsed = time.perf_counter() - t0
    return {"root": root, "elapsed": elapsed, "simulate_s": t_sim,
            "data": Dataset.read(root / "data.csv")}


@pytest.mark.slow
def test_7_full_scale_dataset(full_run, acceptance):
    data = full_run["data"]
    conv = data.y_converged
    frac = float(conv.mean())
    sp_c, sp_n = float(data.y_sparsity[conv].mean()), float(data.y_sparsity[~conv].mean())
    ok = (data.m == 1000 and abs(frac - 0.546) <= 0.10 and sp_c < sp_n
          and full_run["elapsed"] < PIPELINE_BUDGET_S)
    acceptance("7 Full-scale dataset", ok,
               f"{data.m} records, convergent fraction {frac:.3f} (0.546 +- 0.10), sparsity convergent "
               f"{sp_c:.2f} < non-convergent {sp_n:.2f}; pipeline {full_run['elapsed']:.0f} s "
               f"(simulation {full_run['simulate_s']:.0f} s, budget {PIPELINE_BUDGET_S} s)")
    assert ok


def read_report(root):
    header, rows = io.read_csv(root / "report.csv")
    col = {name: header.index(name) for name in ("Model", "RMSE", "MCC")}
    return {r[col["Model"]]: {"sparsity": float(r[col["RMSE"]]), "converged": float(r[col["MCC"]])} for r in rows}


@pytest.mark.slow
def test_8_surrogate_ordering(full_run, acceptance):
    rep = read_report(full_run["root"])
    m = {k: v["converged"] for k, v in rep.items()}
    r = {k: v["sparsity"] for k, v in rep.items()}
    clauses = {
        "GP MCC >= KNN": m["GP"] >= m["KNN"],
        "RBF MCC >= KNN": m["RBF"] >= m["KNN"],
        "GP MCC >= IDW": m["GP"] >= m["IDW"],
        "RBF MCC >= IDW": m["RBF"] >= m["IDW"],
        "RF RMSE <= KNN": r["RF"] <= r["KNN"],
    }
    failed = [k for k, v in clauses.items() if not v]
    detail = (f"MCC GP {m['GP']:.3f} RBF {m['RBF']:.3f} KNN {m['KNN']:.3f} IDW {m['IDW']:.3f}; "
              f"RMSE RF {r['RF']:.2f} KNN {r['KNN']:.2f}")
    acceptance("8 Surrogate ordering", not failed, detail + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert not failed, detail


@pytest.mark.slow
def test_9_global_importance(full_run, acceptance):
    root = full_run["root"]
    found = {}
    for target, expect in (("converged", "intolerance"), ("sparsity", "density")):
        _, rows = io.read_csv(root / "explain" / f"rf_{target}_importance_mdi.csv")
        mdi = max(rows, key=lambda row: float(row[1]))[0]
        side = io.read_json(root / "explain" / f"rf_{target}_shap.json")
        shap_top = max(side["global_importance"], key=side["global_importance"].get)
        found[target] = (mdi, shap_top, expect)
    ok = all(a == e and b == e for a, b, e in found.values())
    acceptance("9 Global importance", ok, "; ".join(f"{t}: MDI top {a}, SHAP top {b} (expected {e})"
                                                    for t, (a, b, e) in found.items()))
    assert ok


@pytest.mark.slow
def test_10_agreement_structure(full_run, acceptance):
    root = full_run["root"]
    splits = {}
    for target in ("converged", "sparsity"):
        files = [root / "explain" / f"{k.lower()}_{target}_shap.csv" for k in KINDS]
        cli("compare", "--run", root, "--shap", *files, "--names", ",".join(KINDS))
        d = io.read_json(root / "compare" / "dendrogram.json")
        splits[target] = [set(g) for g in d["top_split"]]
    together = {t: any({"GP", "RBF"} <= g for g in s) for t, s in splits.items()}
    # planted structure: two blocks of models with opposite feature rankings
    rng = np.random.default_rng(10)
    a, b = np.array([6.0, 4, 2, 1, 0.5]), np.array([0.5, 1, 2, 4, 6.0])
    planted = {f"A{i}": ShapResult(np.zeros(30), a * rng.uniform(0.8, 1.2, (30, 5))) for i in range(8)}
    planted |= {f"B{i}": ShapResult(np.zeros(30), b * rng.uniform(0.8, 1.2, (30, 5))) for i in range(8)}
    den = cluster_average_linkage(dissimilarity(ndcg_matrix(planted)), list(planted))
    blocks_ok = sorted(map(sorted, den.top_split())) == [[f"A{i}" for i in range(8)], [f"B{i}" for i in range(8)]]
    ok = all(together.values()) and blocks_ok
    fmt = lambda s: " | ".join("{" + ",".join(sorted(g)) + "}" for g in s)  # noqa: E731
    acceptance("10 Agreement structure", ok,
               f"top split converged {fmt(splits['converged'])}; sparsity {fmt(splits['sparsity'])}; "
               f"GP+RBF together {together}; planted 16-model blocks recovered {blocks_ok}")
    assert ok


# -- 11 --------------------------------------------------------------------------------

_worst_pva = [0.0]


@settings(max_examples=40)
@given(st.sampled_from(["LR", "QP", "KNN", "IDW", "DT", "RBF"]), st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_11_calibration_fixpoint(kind, seed, noise):
    r = np.random.default_rng(seed)
    base = simulate_mixed(lhs_sample(MIXED_SPACE, 40, seed), 2)
    y = base.target("value") + noise * r.normal(size=base.m)
    data = Dataset(base.space, base.X, {"value": y}, base.config_ids, base.reps)
    cal = conformal_calibrate(train(data, kind, options={"k": 5}), data, seed=seed)
    valid = simulate_mixed(lhs_sample(MIXED_SPACE, 60, seed + 1), 1)
    yv = valid.target("value") + noise * r.normal(size=valid.m)
    mean, var = cal.predict_batch(valid.X)
    ratio = np.mean((yv - mean) ** 2 / var)
    out = pva(yv, mean, var * ratio)
    _worst_pva[0] = max(_worst_pva[0], out)
    assert out < 1e-10


def test_11_summary(acceptance):
    # runs after the property test in file order and reports its worst case
    ok = _worst_pva[0] < 1e-10
    acceptance("11 Calibration fixpoint", ok, f"worst PVA after mean-ratio rescaling {_worst_pva[0]:.1e} (< 1e-10) "
               "over 40 calibrated models")
    assert ok
