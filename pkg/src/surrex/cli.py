"""Command-line workflow: sample -> simulate -> fit -> explain -> compare -> report.

Every command works inside a run directory (``--run``, default ``.``) and
records its inputs, outputs and seeds in ``manifest.json`` there. Stage files
carry the fingerprints of the files they were derived from, so a modified
intermediate is rejected downstream.

Exit codes: 0 success, 2 usage error, 3 data-contract violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from surrex import __version__, agreement, blackboxes, io, metrics, xai
from surrex.dataset import BINARY, Dataset
from surrex.doe import lhs_sample, maximin_improve, nested_lhs
from surrex.errors import DataContractError, NumericalError, SurrexError
from surrex.space import DesignMatrix, DesignSpace
from surrex.surrogates import (KINDS, FitOptions, TrainedSurrogate, conformal_calibrate, mdi_importance,
                               train)

EXIT_OK, EXIT_USAGE = 0, 2


class UsageError(Exception):
    pass


# -- helpers -----------------------------------------------------------------------


def default_seed() -> int:
    raw = os.environ.get("SURREX_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SURREX_SEED must be an integer, got {raw!r}") from None


def load_space(arg: str) -> DesignSpace:
    if arg in blackboxes.BLACKBOXES:
        return blackboxes.get_space(arg)
    path = Path(arg)
    if not path.exists():
        raise DataContractError(f"space file {arg} not found (builtin spaces: {sorted(blackboxes.BLACKBOXES)})")
    try:
        doc = io.read_json(path)
        return DesignSpace.from_dict(doc["space"] if "space" in doc else doc)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataContractError(f"invalid space file {arg}: {exc}") from exc


def _split_list(s: str | None) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()] if s else []


class Manifest:
    """``manifest.json``: per-stage inputs, outputs (with hashes), seeds and timestamps."""

    def __init__(self, run: Path):
        self.path = run / "manifest.json"
        self.run = run
        self.doc = io.read_json(self.path) if self.path.exists() else {"tool": "surrex", "stages": {}}

    def record(self, stage: str, inputs: dict, outputs: list[Path], **info) -> None:
        self.doc["tool_version"] = __version__
        self.doc["stages"][stage] = {
            "inputs": inputs,
            "outputs": {self._rel(p): io.file_fingerprint(p) for p in outputs},
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            **info,
        }
        io.write_json(self.path, self.doc)

    def _rel(self, p: Path) -> str:
        try:
            return str(Path(p).resolve().relative_to(self.run.resolve()))
        except ValueError:
            return str(p)

    def verify(self) -> list[str]:
        problems = []
        for stage, rec in self.doc.get("stages", {}).items():
            for rel, digest in rec.get("outputs", {}).items():
                p = self.run / rel
                if not p.exists():
                    problems.append(f"{stage}: {rel} is missing")
                elif io.file_fingerprint(p) != digest:
                    problems.append(f"{stage}: {rel} was modified")
        return problems


# -- sample ------------------------------------------------------------------------


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.nested is not None and not 1 <= args.nested <= args.n:
        raise UsageError("--nested must be between 1 and --n")
    if args.nested is not None and args.n % args.nested:
        raise UsageError("--nested must divide --n")
    if args.maximin_iters < 0:
        raise UsageError("--maximin-iters must be non-negative")
    space = load_space(args.space)
    seed = args.seed if args.seed is not None else default_seed()
    run = Path(args.run)
    run.mkdir(parents=True, exist_ok=True)
    if args.nested:
        design, inner = nested_lhs(space, args.n, args.nested, seed)
        groups = [list(inner), [i for i in range(args.n) if i not in set(inner)]]
    else:
        design, inner, groups = lhs_sample(space, args.n, seed), None, None
    if args.maximin_iters:
        design = maximin_improve(design, args.maximin_iters, seed, groups=groups)
    space_path = run / "space.json"
    io.write_json(space_path, {"space": space.to_dict(), "space_fingerprint": space.fingerprint()})
    doe_path = run / "doe.csv"
    design.write(doe_path, extra={"maximin_iters": args.maximin_iters})
    outputs = [space_path, doe_path, doe_path.with_suffix(".json")]
    if inner is not None:
        inner_path = run / "doe_inner.csv"
        io.write_csv(inner_path, ["row"], [[str(i)] for i in inner])
        outputs.append(inner_path)
    Manifest(run).record("sample", {"space": args.space}, outputs, seed=seed,
                         space_fingerprint=space.fingerprint(), n=args.n, nested=args.nested)
    print(f"wrote {doe_path} ({design.m} rows){' and ' + str(run / 'doe_inner.csv') if inner else ''}")
    return EXIT_OK


# -- simulate ------------------------------------------------------------------------


def _read_inner(run: Path, doe_path: Path, design: DesignMatrix) -> list[int] | None:
    path = doe_path.with_name(doe_path.stem + "_inner.csv")
    if path.exists():
        _, rows = io.read_csv(path)
        return [int(r[0]) for r in rows]
    return design.meta.get("inner_row_indices")


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    if args.max_iters < 1:
        raise UsageError("--max-iters must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    run = Path(args.run)
    doe_path = Path(args.doe) if args.doe else run / "doe.csv"
    space = blackboxes.get_space(args.blackbox)
    side = doe_path.with_suffix(".json")
    if not doe_path.exists() or not side.exists():
        raise DataContractError(f"{doe_path}: DoE file or its sidecar is missing")
    design = DesignMatrix.read(doe_path)
    if design.space.names != space.names or design.space.fingerprint() != space.fingerprint():
        raise DataContractError(f"{doe_path}: columns {design.space.names} do not match the "
                                f"{args.blackbox} space {space.names}")
    seed = args.seed if args.seed is not None else default_seed()
    data = blackboxes.evaluate(args.blackbox, design, args.reps, seed, args.max_iters, args.jobs)
    inner = _read_inner(run, doe_path, design)
    out = Path(args.out) if args.out else run / "data.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {"doe_fingerprint": io.file_fingerprint(doe_path)}
    if inner is not None:
        extra["inner_config_ids"] = [int(i) for i in inner]
    side_out = data.write(out, extra=extra)
    Manifest(run).record("simulate", {"doe": str(doe_path), "doe_fingerprint": extra["doe_fingerprint"]},
                         [out, side_out], seed=seed, blackbox=args.blackbox, reps=args.reps,
                         max_iters=args.max_iters)
    print(f"wrote {out} ({data.m} records)")
    return EXIT_OK


# -- fit -------------------------------------------------------------------------


def _train_split(data: Dataset, train_frac: float | None, seed: int) -> tuple[np.ndarray, np.ndarray]:
    ids = np.unique(data.config_ids)
    if train_frac is None:
        inner = data.meta.get("inner_config_ids")
        if inner is None:
            raise UsageError("dataset has no nested-inner subset; pass --train-frac")
        tr = np.array(sorted(set(int(i) for i in inner)), dtype=int)
    else:
        if not 0.0 < train_frac < 1.0:
            raise UsageError("--train-frac must lie in (0, 1)")
        k = int(round(train_frac * ids.size))
        if k < 1 or k >= ids.size:
            raise UsageError("--train-frac leaves an empty training or validation set")
        tr = np.sort(np.random.default_rng(seed).permutation(ids)[:k])
    va = np.setdiff1d(ids, tr)
    if va.size == 0:
        raise DataContractError("no validation configurations remain")
    return tr, va


def cmd_fit(args) -> int:
    run = Path(args.run)
    data_path = Path(args.data) if args.data else run / "data.csv"
    data = Dataset.read(data_path)
    data_fp = io.file_fingerprint(data_path)
    kinds = [k.upper() for k in _split_list(args.models)] or list(KINDS)
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise UsageError(f"unknown model kinds {bad}; choose from {list(KINDS)}")
    targets = (_split_list(args.targets) or [t for t in ("sparsity", "converged") if t in data.targets]
               or list(data.targets))
    for t in targets:
        if t not in data.targets:
            raise DataContractError(f"dataset has no target {t!r}; has {list(data.targets)}")
    seed = args.seed if args.seed is not None else default_seed()
    tr_ids, va_ids = _train_split(data, args.train_frac, seed)
    tr, va = data.select_configs(tr_ids), data.select_configs(va_ids)
    models_dir = run / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    opts = FitOptions(seed=seed)
    reg_targets = [t for t in targets if data.target_types.get(t) != BINARY]
    cls_targets = [t for t in targets if data.target_types.get(t) == BINARY]
    label_target = len(reg_targets) > 1 or len(cls_targets) > 1
    rows: dict[str, metrics.MetricRow] = {}
    outputs = []
    for kind in kinds:
        for target in targets:
            task = "classification" if target in cls_targets else "regression"
            try:
                model = train(tr, kind, task, target, opts)
                if args.pva and task == "regression" and not model.has_variance:
                    model = conformal_calibrate(model, tr, seed)
            except SurrexError as exc:
                raise type(exc)(f"{kind} on {target}: {exc}") from exc
            model.provenance = {"dataset": str(data_path), "dataset_fingerprint": data_fp,
                                "train_config_ids": [int(i) for i in tr_ids],
                                "validation_config_ids": [int(i) for i in va_ids]}
            path = models_dir / f"{kind.lower()}_{target}.json"
            model.save(path)
            outputs.append(path)
            rowname = f"{kind}:{target}" if label_target else kind
            row = rows.setdefault(rowname, metrics.MetricRow(rowname))
            y = va.target(target)
            mean, var = model.predict_batch(va.X)
            if task == "regression":
                row.rmse = metrics.rmse(y, mean)
                if var is not None:
                    row.pva = metrics.pva(y, mean, var)
            else:
                c = metrics.ConfusionCounts.from_labels(y.astype(bool), mean >= 0.5)
                row.mcc = metrics.mcc(c)
                row.mcc_defined = row.mcc is not None
    report = metrics.rank_models(list(rows.values()))
    report_path = run / "report.csv"
    report.write(report_path)
    outputs.append(report_path)
    Manifest(run).record("fit", {"dataset": str(data_path), "dataset_fingerprint": data_fp}, outputs,
                         seed=seed, models=kinds, targets=targets, n_train_records=tr.m,
                         n_validation_records=va.m, pva=bool(args.pva))
    print(f"trained {len(kinds) * len(targets)} models on {tr.m} records; validated on {va.m} records")
    _print_table(report)
    return EXIT_OK


def _print_table(report: metrics.MetricReport) -> None:
    rows = [list(report.COLUMNS), *report.to_rows()]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))


# -- explain --------------------------------------------------------------------------


def _resolve_model(run: Path, arg: str) -> Path:
    p = Path(arg)
    if p.suffix == ".json" and p.exists():
        return p
    cand = run / "models" / f"{arg.lower()}.json"
    if cand.exists():
        return cand
    matches = sorted((run / "models").glob(f"{arg.lower()}_*.json"))
    if len(matches) == 1:
        return matches[0]
    if len(matches) > 1:
        raise UsageError(f"--model {arg} is ambiguous: {[m.name for m in matches]}")
    raise DataContractError(f"model {arg} not found")


def _shap_chunk(payload):
    model, X, bg, interactions = payload
    res = xai.shap_values(model, X, bg, interactions=interactions)
    return res.base, res.phi, res.interactions, res.predictions


def _parallel_shap(model, X, bg, interactions, jobs, names, ids):
    if jobs <= 1 or X.shape[0] < 2:
        return xai.shap_values(model, X, bg, interactions, names, ids)
    parts = np.array_split(np.arange(X.shape[0]), min(jobs, X.shape[0]))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = list(pool.map(_shap_chunk, [(model, X[p], bg, interactions) for p in parts]))
    return xai.ShapResult(
        base=np.concatenate([o[0] for o in out]), phi=np.concatenate([o[1] for o in out]),
        interactions=np.concatenate([o[2] for o in out]) if interactions else None,
        instances=X, predictions=np.concatenate([o[3] for o in out]), instance_ids=np.asarray(ids),
        feature_names=list(names), background=bg.description)


def cmd_explain(args) -> int:
    run = Path(args.run)
    model_path = _resolve_model(run, args.model)
    model = TrainedSurrogate.load(model_path)
    prov = model.provenance
    data_path = Path(args.data) if args.data else Path(prov.get("dataset", run / "data.csv"))
    data = Dataset.read(data_path)
    data_fp = io.file_fingerprint(data_path)
    if prov.get("dataset_fingerprint") and prov["dataset_fingerprint"] != data_fp:
        raise DataContractError(f"{data_path} is not the dataset {model_path.name} was trained on")
    if data.space.fingerprint() != model.space.fingerprint():
        raise DataContractError("dataset and model use different design spaces")
    space = model.space
    names = space.names
    seed = args.seed if args.seed is not None else default_seed()
    train_ids = prov.get("train_config_ids")
    tr = data.select_configs(train_ids) if train_ids else data
    bg = xai.build_background(tr.X, cap=args.background_cap, seed=seed)
    if args.instances == "validation" and prov.get("validation_config_ids"):
        pool_ids = prov["validation_config_ids"]
    elif args.instances == "training" and train_ids:
        pool_ids = train_ids
    else:
        pool_ids = np.unique(data.config_ids).tolist()
    sub = data.select_configs(pool_ids)
    inst_ids, inst_X = sub.unique_configs()
    if args.max_instances is not None and inst_ids.size > args.max_instances:
        keep = np.sort(np.random.default_rng(seed).choice(inst_ids.size, args.max_instances, replace=False))
        inst_ids, inst_X = inst_ids[keep], inst_X[keep]
    features = _split_list(args.features) or names
    for f in features:
        if f not in names:
            raise UsageError(f"unknown feature {f!r}; choose from {names}")
    out_dir = run / "explain"
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{model_path.stem}_{args.method}"
    outputs: list[Path] = []
    side = {"model": str(model_path), "model_fingerprint": io.file_fingerprint(model_path),
            "dataset_fingerprint": data_fp, "method": args.method, "seed": seed,
            "background": bg.description}
    if args.method in ("shap", "shap-interactions"):
        inter = args.method == "shap-interactions"
        res = _parallel_shap(model, inst_X, bg, inter, args.jobs, names, inst_ids)
        path = out_dir / f"{stem}.csv"
        if inter:
            xai.write_interactions_csv(path, res)
        else:
            xai.write_shap_csv(path, res)
            bees = out_dir / f"{stem}_beeswarm.csv"
            xai.write_beeswarm_csv(bees, res, space)
            outputs.append(bees)
        side["base"] = {str(i): float(b) for i, b in zip(res.instance_ids, res.base)}
        side["prediction"] = {str(i): float(p) for i, p in zip(res.instance_ids, res.predictions)}
        side["global_importance"] = dict(zip(names, xai.global_shap_importance(res).tolist()))
    elif args.method in ("pdp", "ice"):
        results = []
        sens_rows = []
        for f in features:
            j = space.index(f)
            grid = xai.default_grid(space, j, args.grid)
            res = xai.pdp(model, [j], grid, bg, keep_ice=args.method == "ice", kind=space[j].kind)
            results.append(res)
            sens_rows.append([f, space[j].kind, "" if res.sensitivity is None else io.fmt_real(res.sensitivity)])
        path = out_dir / f"{stem}.csv"
        xai.write_pdp_csv(path, results, space)
        sens = out_dir / f"{stem}_sensitivity.csv"
        io.write_csv(sens, ["feature", "kind", "sensitivity"], sens_rows)
        outputs.append(sens)
    elif args.method == "importance":
        if args.source == "mdi":
            if model.kind not in ("DT", "RF"):
                raise DataContractError(f"MDI importance needs a DT or RF model, got {model.kind}")
            imp = mdi_importance(model)
        else:
            imp = xai.global_shap_importance(_parallel_shap(model, inst_X, bg, False, args.jobs, names, inst_ids))
        path = out_dir / f"{stem}_{args.source}.csv"
        io.write_csv(path, ["feature", "importance"], [[n, io.fmt_real(v)] for n, v in zip(names, imp)])
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown method {args.method}")
    side["file_fingerprint"] = io.file_fingerprint(path)
    side_path = path.with_suffix(".json")
    io.write_json(side_path, side)
    outputs = [path, side_path, *outputs]
    Manifest(run).record(f"explain:{stem}", {"model": str(model_path), "dataset_fingerprint": data_fp},
                         outputs, seed=seed)
    print(f"wrote {path}")
    return EXIT_OK


# -- compare ---------------------------------------------------------------------


def _read_checked_shap(path: Path) -> xai.ShapResult:
    side = path.with_suffix(".json")
    if side.exists():
        rec = io.read_json(side)
        if rec.get("file_fingerprint") not in (None, io.file_fingerprint(path)):
            raise DataContractError(f"{path}: content does not match its recorded fingerprint")
    try:
        return xai.read_shap_csv(path)
    except ValueError as exc:
        raise DataContractError(str(exc)) from exc


def cmd_compare(args) -> int:
    run = Path(args.run)
    paths = [Path(p) for p in args.shap]
    if len(paths) < 2:
        raise UsageError("compare needs at least two SHAP files")
    names = _split_list(args.names) or [p.stem.removesuffix("_shap") for p in paths]
    if len(names) != len(paths) or len(set(names)) != len(names):
        raise UsageError("--names must give one distinct name per SHAP file")
    results = {n: _read_checked_shap(p) for n, p in zip(names, paths)}
    first = next(iter(results.values()))
    for n, r in results.items():
        if list(r.instance_ids) != list(first.instance_ids) or r.feature_names != first.feature_names:
            raise DataContractError(f"{n}: SHAP file covers different instances or features")
    M = agreement.ndcg_matrix(results)
    out_dir = run / "compare"
    out_dir.mkdir(parents=True, exist_ok=True)
    mpath, dpath = out_dir / "ndcg.csv", out_dir / "dendrogram.json"
    M.write(mpath)
    dendro = agreement.cluster_average_linkage(agreement.dissimilarity(M), M.names)
    left, right = dendro.top_split()
    io.write_json(dpath, {**dendro.to_dict(), "top_split": [sorted(left), sorted(right)],
                          "inputs": {n: io.file_fingerprint(p) for n, p in zip(names, paths)}})
    Manifest(run).record("compare", {n: str(p) for n, p in zip(names, paths)}, [mpath, dpath])
    print(f"wrote {mpath} and {dpath}; top split {sorted(left)} | {sorted(right)}")
    return EXIT_OK


# -- report ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    run = Path(args.run)
    man = Manifest(run)
    problems = man.verify()
    for p in problems:
        print(f"integrity: {p}", file=sys.stderr)
    report_path = run / "report.csv"
    if report_path.exists():
        _print_table(metrics.MetricReport.read(report_path))
    dpath = run / "compare" / "dendrogram.json"
    if dpath.exists():
        d = io.read_json(dpath)
        print(f"dendrogram top split: {d['top_split'][0]} | {d['top_split'][1]}")
    for stage, rec in man.doc.get("stages", {}).items():
        print(f"{stage}: {len(rec.get('outputs', {}))} outputs, recorded {rec.get('timestamp')}")
    if problems:
        raise DataContractError(f"{len(problems)} artifact(s) failed the integrity check")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surrex", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"surrex {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--run", default=".", help="run directory holding stage artifacts and manifest.json")
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: $SURREX_SEED or 0)")

    s = sub.add_parser("sample", help="draw a (nested) Latin hypercube design")
    common(s)
    s.add_argument("--space", required=True, help="space JSON file or builtin name (schelling, mixed-analytic)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--nested", type=int, default=None, help="size of the nested inner LHS")
    s.add_argument("--maximin-iters", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("simulate", help="evaluate a blackbox on the design")
    common(s)
    s.add_argument("--doe", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--blackbox", choices=sorted(blackboxes.BLACKBOXES), default="schelling")
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="train surrogates and validate on the held-out configurations")
    common(s)
    s.add_argument("--data", default=None)
    s.add_argument("--models", default=None, help=f"comma list from {','.join(k.lower() for k in KINDS)}")
    s.add_argument("--targets", default=None, help="comma list of dataset targets")
    s.add_argument("--train-frac", type=float, default=None)
    s.add_argument("--pva", action="store_true", help="conformally calibrate variance-less regressors")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("explain", help="SHAP, PDP/ICE or importance exports for one model")
    common(s)
    s.add_argument("--model", required=True, help="model JSON path or <kind>[_<target>] under models/")
    s.add_argument("--data", default=None)
    s.add_argument("--method", required=True, choices=["shap", "shap-interactions", "pdp", "ice", "importance"])
    s.add_argument("--source", choices=["mdi", "shap"], default="mdi", help="importance source")
    s.add_argument("--features", default=None)
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--background-cap", type=int, default=256)
    s.add_argument("--instances", choices=["validation", "training", "all"], default="validation")
    s.add_argument("--max-instances", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("compare", help="NDCG agreement matrix and dendrogram from SHAP exports")
    common(s)
    s.add_argument("--shap", nargs="+", required=True)
    s.add_argument("--names", default=None)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="print the metric table and verify artifact integrity")
    common(s)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "grid", 2) < 2 or getattr(args, "background_cap", 1) < 1:
            raise UsageError("--grid must be >= 2 and --background-cap >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"surrex: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SurrexError as exc:
        print(f"surrex: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"surrex: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except (ValueError, KeyError, OSError) as exc:
        print(f"surrex: error: {exc}", file=sys.stderr)
        return DataContractError.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
