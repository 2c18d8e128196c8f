"""Full Schelling surrogate study: design, simulation, surrogates, explanations, agreement.

Runs 200 configurations x 5 replications, trains every surrogate kind on the nested
50-configuration split, exports SHAP for each model and target, RF importances, and
one agreement dendrogram per target.  Usage:

    python scripts/run_schelling_pipeline.py --run runs/schelling [--seed 42] [--jobs 1]
"""

import argparse
import time
from pathlib import Path

from surrex.cli import main
from surrex.surrogates import KINDS

TARGETS = ("converged", "sparsity")


def step(*argv) -> None:
    t0 = time.perf_counter()
    code = main([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)
    print(f"[{time.perf_counter() - t0:7.1f} s] {' '.join(map(str, argv[:1]))}")


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--run", type=Path, default=Path("runs/schelling"))
    p.add_argument("--space", default=str(Path(__file__).resolve().parent.parent / "spaces" / "schelling.json"))
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--nested", type=int, default=50)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    return p.parse_args()


def run_pipeline(args: argparse.Namespace) -> None:
    run = args.run
    step("sample", "--run", run, "--space", args.space, "--n", args.n, "--nested", args.nested, "--seed", args.seed)
    step("simulate", "--run", run, "--reps", args.reps, "--seed", args.seed, "--jobs", args.jobs)
    step("fit", "--run", run, "--models", ",".join(k.lower() for k in KINDS),
         "--targets", ",".join(TARGETS), "--seed", args.seed)
    for target in TARGETS:
        for kind in KINDS:
            step("explain", "--run", run, "--model", f"{kind.lower()}_{target}", "--method", "shap",
                 "--seed", args.seed, "--jobs", args.jobs)
        step("explain", "--run", run, "--model", f"rf_{target}", "--method", "importance", "--source", "mdi")
        step("explain", "--run", run, "--model", f"rf_{target}", "--method", "pdp", "--seed", args.seed)
        shap_files = [run / "explain" / f"{k.lower()}_{target}_shap.csv" for k in KINDS]
        # compare writes to a fixed location, so keep one copy per target
        step("compare", "--run", run, "--shap", *shap_files, "--names", ",".join(KINDS))
        for f in ("ndcg.csv", "dendrogram.json"):
            src = run / "compare" / f
            src.replace(run / "compare" / f"{target}_{f}")
    step("report", "--run", run)


if __name__ == "__main__":
    run_pipeline(parse_args())
