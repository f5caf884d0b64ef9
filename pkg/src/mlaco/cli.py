"""Command-line front end: generate, label, features, train, predict, solve,
benchmark, compare, stats and pipeline.

Exit codes: 0 success, 1 usage, 2 data error, 3 partial benchmark failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import aco, classifier, exact, features, stats
from .errors import ConfigError, MlacoError
from .instance import Instance, generate_random, make_route, parse, write_json

log = logging.getLogger("mlaco")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _budget_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("budget must look like LO:HI") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("budget LO must not exceed HI")
    return lo, hi


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MLACO_THREADS", "1")))
    except ValueError:
        raise UsageError("MLACO_THREADS must be an integer") from None


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(args.count):
        name = f"rand{args.n}_s{args.seed}_{k:04d}"
        inst = generate_random(args.n, seed=(args.seed, k), budget_range=args.budget, name=name)
        files.append(str(write_json(inst, out / f"{name}.json")))
    stub = {"instances": {"generate": {"n": args.n, "count": args.count, "seed": args.seed,
                                       "budget": list(args.budget)}}, "files": files}
    print(json.dumps(stub, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- label

def _solution_dict(inst: Instance, res: exact.ExactResult) -> dict:
    return {
        "instance": inst.name,
        "route": [v + 1 for v in res.route.vertices],
        "objective": res.objective,
        "cost": res.route.cost,
        "proved_optimal": res.proved_optimal,
        "nodes_explored": res.nodes_explored,
        "wall_time": res.wall_time,
    }


def load_solution(inst: Instance, path):
    d = json.loads(Path(path).read_text())
    return make_route(inst, [v - 1 for v in d["route"]]), d


def cmd_label(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in args.instances:
        inst = parse(p)
        res = exact.solve_bnb(inst, args.time_limit, method=args.method)
        _write_json(out / f"{Path(p).stem}.solution.json", _solution_dict(inst, res))
        print(f"{inst.name}\t{res.objective:g}\t{'optimal' if res.proved_optimal else 'timeout'}\t{res.wall_time:.2f}s")
    return EXIT_OK


# ---------------------------------------------------------------- features / train / predict

def cmd_features(args) -> int:
    inst = parse(args.instance)
    optimal = None
    if args.solution:
        optimal, meta = load_solution(inst, args.solution)
        if not meta.get("proved_optimal", False):
            log.warning("%s: labels come from a route not proved optimal", inst.name)
    fm = features.extract(inst, m=args.m, seed=args.seed, optimal=optimal)
    fm.to_csv(args.out)
    print(f"{len(fm)} rows -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.kind not in classifier.KINDS:
        raise UsageError(f"unsupported kind {args.kind!r}; supported: {', '.join(classifier.KINDS)}")
    data = features.EdgeFeatureMatrix.concat([features.EdgeFeatureMatrix.from_csv(p) for p in args.features])
    t0 = time.perf_counter()
    model = classifier.train(data, args.kind, epochs=args.epochs, seed=args.seed)
    model.save(args.out)
    print(json.dumps({"model": args.out, "train_seconds": time.perf_counter() - t0,
                      **classifier.evaluate(model, data)}, indent=2))
    return EXIT_OK


def predict_instance(model: classifier.LinearModel, inst: Instance, m: int | None, seed: int) -> classifier.Prediction:
    return classifier.predict(model, features.extract(inst, m=m, seed=seed))


def cmd_predict(args) -> int:
    inst = parse(args.instance)
    model = classifier.LinearModel.load(args.model)
    t0 = time.perf_counter()
    pred = predict_instance(model, inst, args.m, args.seed)
    elapsed = time.perf_counter() - t0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "p"])
        for i in range(inst.n):
            for j in range(inst.n):
                if i != j:
                    w.writerow([i + 1, j + 1, repr(float(pred.p[i, j]))])
    print(f"{inst.n * (inst.n - 1)} edges predicted in {elapsed:.3f}s -> {args.out}")
    return EXIT_OK


def load_prediction(path, n: int) -> classifier.Prediction:
    p = np.zeros((n, n))
    with open(path) as fh:
        for row in csv.DictReader(fh):
            p[int(row["i"]) - 1, int(row["j"]) - 1] = float(row["p"])
    return classifier.Prediction(p=p, model_id=Path(path).stem)


# ---------------------------------------------------------------- solve

def _config_from_args(args) -> aco.AcoConfig:
    over = {}
    for key in ("variant", "integration", "update_rule", "termination", "deposit"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    for key in ("ants", "budget", "t_ter", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "local_search", False):
        over["local_search"] = True
    return aco.preset(args.preset, **over)


def cmd_solve(args) -> int:
    inst = parse(args.instance)
    cfg = _config_from_args(args)
    pred = None
    if cfg.integration != "none":
        if args.prediction:
            pred = load_prediction(args.prediction, inst.n)
        elif args.model:
            pred = predict_instance(classifier.LinearModel.load(args.model), inst, args.m, args.seed)
        else:
            raise UsageError(f"integration {cfg.integration!r} needs --model or --prediction")
    trace = aco.run(inst, cfg, pred)
    if args.trace:
        trace.to_csv(args.trace)
    best = trace.best
    print(json.dumps({"instance": inst.name, "objective": best.objective, "cost": best.cost,
                      "route": [v + 1 for v in best.vertices], "constructions": trace.constructions[-1],
                      "wall_time": trace.wall_time}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- manifests

def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_instances(spec: dict, base: Path) -> list[Instance]:
    if "generate" in spec:
        g = spec["generate"]
        n, count, seed = int(g["n"]), int(g.get("count", 1)), int(g.get("seed", 0))
        budget = tuple(g.get("budget", (100, 400)))
        return [generate_random(n, seed=(seed, k), budget_range=budget, name=f"rand{n}_s{seed}_{k:04d}")
                for k in range(count)]
    if "glob" in spec:
        files = sorted(glob.glob(str(_resolve(base, spec["glob"]))))
        if not files:
            raise ConfigError(f"instance glob {spec['glob']!r} matched nothing")
        return [parse(f) for f in files]
    if "files" in spec:
        return [parse(_resolve(base, f)) for f in spec["files"]]
    raise ConfigError("instances need one of: generate, glob, files")


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        man = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return man, path.parent


def validate_benchmark(man: dict, base: Path, paper_scale: bool = False) -> dict:
    eff = dict(man)
    if "instances" not in eff or not eff.get("configs"):
        raise ConfigError("benchmark manifest needs 'instances' and a nonempty 'configs' list")
    names = [c.get("name") for c in eff["configs"]]
    if None in names or len(set(names)) != len(names):
        raise ConfigError("every config needs a unique 'name'")
    eff.setdefault("baseline", names[0])
    if eff["baseline"] not in names:
        raise ConfigError(f"baseline {eff['baseline']!r} is not a config name")
    if paper_scale:
        eff["runs"] = 25
        eff["budget_per_n"] = 10000
    eff.setdefault("runs", 5)
    eff.setdefault("budget_per_n", 1000)
    seeds = eff.get("seeds") or list(range(eff["runs"]))
    if len(seeds) < eff["runs"]:
        raise ConfigError(f"{len(seeds)} seeds listed for {eff['runs']} runs")
    eff["seeds"] = seeds[: eff["runs"]]
    needs_model = any(c.get("integration", aco.PRESETS.get(c.get("preset", "mmas"), {}).get("integration", "none"))
                      != "none" for c in eff["configs"])
    if eff.get("model"):
        if not _resolve(base, eff["model"]).exists():
            raise ConfigError(f"model file {eff['model']!r} not found")
    elif needs_model:
        raise ConfigError("a config uses an ML integration mode but the manifest names no model")
    return eff


def _cell(job):
    """One (config, instance, seed) run; errors are returned, not raised."""
    inst, cfg, pred, trace_path = job
    try:
        tr = aco.run(inst, cfg, pred)
        tr.to_csv(trace_path)
        return {"best": tr.best.objective, "first_iteration_best": tr.first_iteration_best,
                "wall_time": tr.wall_time, "status": "ok", "error": ""}
    except Exception as e:  # recorded per cell; the benchmark keeps going
        return {"best": float("nan"), "first_iteration_best": float("nan"), "wall_time": 0.0,
                "status": "failed", "error": f"{type(e).__name__}: {e}"}


def run_benchmark(man: dict, base: Path, out: Path, preset_override: str | None = None) -> int:
    instances = load_instances(man["instances"], base)
    model = classifier.LinearModel.load(_resolve(base, man["model"])) if man.get("model") else None
    fm_m, fm_seed = man.get("feature_m"), int(man.get("feature_seed", 0))
    out.mkdir(parents=True, exist_ok=True)
    configs = {}
    for c in man["configs"]:
        fields = {k: v for k, v in c.items() if k not in ("name", "preset")}
        configs[c["name"]] = (preset_override or c.get("preset", "mmas"), fields)

    preds = {}
    if model is not None:
        t0 = time.perf_counter()
        for inst in instances:
            preds[inst.name] = predict_instance(model, inst, fm_m, fm_seed)
        log.info("predictions for %d instances in %.2fs", len(instances), time.perf_counter() - t0)

    jobs, keys, effective = [], [], {}
    for name, (pset, fields) in configs.items():
        (out / "traces" / name).mkdir(parents=True, exist_ok=True)
        for inst in instances:
            for seed in man["seeds"]:
                base_cfg = aco.preset(pset, **fields)
                cfg = aco.preset(pset, **{**fields, "seed": int(seed),
                                          "budget": base_cfg.budget or man["budget_per_n"] * inst.n})
                effective[name] = {"preset": pset, **{k: v for k, v in cfg.to_dict().items() if k != "seed"}}
                pred = preds.get(inst.name) if cfg.integration != "none" else None
                jobs.append((inst, cfg, pred, out / "traces" / name / f"{inst.name}_seed{seed}.csv"))
                keys.append((name, inst.name, seed))

    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]

    failed = 0
    with (out / "runs.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "config_hash", "instance", "seed", "best", "first_iteration_best", "wall_time",
                    "status", "error"])
        for (name, iname, seed), r in zip(keys, results):
            failed += r["status"] != "ok"
            w.writerow([name, config_hash(effective[name]), iname, seed, r["best"], r["first_iteration_best"],
                        f"{r['wall_time']:.4f}", r["status"], r["error"]])

    _write_json(out / "effective_config.json", {"manifest": man, "preset_override": preset_override,
                                               "configs": {k: {**v, "hash": config_hash(v)} for k, v in effective.items()}})
    summarize(out, man["baseline"])
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_runs(out: Path) -> list[dict]:
    with (out / "runs.csv").open() as fh:
        return list(csv.DictReader(fh))


def summarize(out: Path, baseline: str) -> str:
    """Per-config summary, Wilcoxon against the baseline, normalized curves."""
    rows = [r for r in _read_runs(out) if r["status"] == "ok"]
    configs = list(dict.fromkeys(r["config"] for r in rows))
    if baseline not in configs:
        raise ConfigError(f"baseline {baseline!r} has no successful runs")
    insts = sorted(set.intersection(*(set(r["instance"] for r in rows if r["config"] == c) for c in configs)))
    per = {c: [float(np.mean([float(r["best"]) for r in rows if r["config"] == c and r["instance"] == i]))
               for i in insts] for c in configs}
    table_rows = stats.comparison_rows(per, baseline)
    stats.write_rows_csv(out / "summary.csv", table_rows)
    text = stats.format_table(table_rows)
    (out / "summary.txt").write_text(text + "\n")

    (out / "curves").mkdir(exist_ok=True)
    seeds = sorted(set(r["seed"] for r in rows), key=int)
    for c in configs:
        traces, base = [], []
        for i in insts:
            for s in seeds:
                p, q = out / "traces" / c / f"{i}_seed{s}.csv", out / "traces" / baseline / f"{i}_seed{s}.csv"
                if p.exists() and q.exists():
                    traces.append(aco.RunTrace.from_csv(p))
                    base.append(aco.RunTrace.from_csv(q))
        if traces:
            grid, curve = stats.normalize_curves(traces, base)
            stats.write_curve_csv(out / "curves" / f"{c}.csv", grid, curve)
    return text


def cmd_benchmark(args) -> int:
    man, base = load_manifest(args.manifest)
    eff = validate_benchmark(man, base, args.paper_scale)
    out = Path(args.out or _resolve(base, eff.get("output", "report")))
    code = run_benchmark(eff, base, out, args.preset)
    print((out / "summary.txt").read_text())
    if code == EXIT_PARTIAL:
        print("some benchmark cells failed; see runs.csv", file=sys.stderr)
    return code


def cmd_compare(args) -> int:
    print(summarize(Path(args.report), args.baseline))
    return EXIT_OK


# ---------------------------------------------------------------- stats

def _read_numbers(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").split()
    try:
        return np.array([float(x) for x in text])
    except ValueError as e:
        raise ConfigError(f"{path}: non-numeric value ({e})") from None


def cmd_stats(args) -> int:
    if args.stat == "wilcoxon":
        r = stats.wilcoxon_signed_rank(_read_numbers(args.a), _read_numbers(args.b), alternative=args.alternative)
        print(json.dumps({"w_statistic": r.w_statistic, "w_plus": r.w_plus, "p_value": r.p_value,
                          "n_effective": r.n_effective, "method": r.method, "degenerate": r.degenerate}, indent=2))
    else:
        print(f"{stats.optimality_gap(args.found, args.opt):.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- pipeline

def cmd_pipeline(args) -> int:
    man, base = load_manifest(args.manifest)
    kind = man.get("kind", "svm")
    if kind not in classifier.KINDS:
        raise UsageError(f"unsupported kind {kind!r}: only linear svm and logreg models are provided "
                         "(graph neural network classifiers are out of scope)")
    timings = {}
    t0 = time.perf_counter()
    instances = load_instances(man["instances"], base)
    results = exact.label_instances(instances, float(man.get("time_limit", 60)))
    timings["label"] = time.perf_counter() - t0
    solved = [(i, r) for i, r in zip(instances, results) if r.proved_optimal]
    if man.get("max_solved"):
        solved = solved[: int(man["max_solved"])]
    if not solved:
        raise MlacoError("no training instance was solved to optimality")
    t0 = time.perf_counter()
    data = exact.build_training_set([i for i, _ in solved], m=man.get("m"), seed=int(man.get("seed", 0)),
                                    results=[r for _, r in solved])
    timings["features"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    model = classifier.train(data, kind, epochs=int(man.get("epochs", 2000)), seed=int(man.get("seed", 0)))
    timings["train"] = time.perf_counter() - t0
    out = Path(args.out or _resolve(base, man.get("output", "model.json")))
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_suffix(out.suffix + ".partial")
    model.save(tmp)
    tmp.replace(out)
    report = {"model": str(out), "solved": len(solved), "of": len(instances), "rows": len(data),
              "positives": data.positives, "timings": timings, **classifier.evaluate(model, data)}
    print(json.dumps(report, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mlaco", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write random instances as JSON")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--budget", type=_budget_range, default=(100, 400), help="LO:HI")
    g.add_argument("--out", default="instances")
    g.set_defaults(func=cmd_generate)

    lb = sub.add_parser("label", help="solve instances exactly")
    lb.add_argument("instances", nargs="+")
    lb.add_argument("--time-limit", type=float, default=60.0)
    lb.add_argument("--method", choices=("auto", "dfs", "cut"), default="auto")
    lb.add_argument("--out", default="labels")
    lb.set_defaults(func=cmd_label)

    f = sub.add_parser("features", help="edge features as CSV")
    f.add_argument("instance")
    f.add_argument("--solution", help="solution JSON from `label`; adds a label column")
    f.add_argument("--m", type=int, default=None, help="sample size (default 100n)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="fit a linear classifier on labelled feature CSVs")
    t.add_argument("features", nargs="+")
    t.add_argument("--kind", default="svm")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="per-edge probabilities for one instance")
    pr.add_argument("instance")
    pr.add_argument("--model", required=True)
    pr.add_argument("--m", type=int, default=None)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("solve", help="run AS or MMAS on one instance")
    s.add_argument("instance")
    s.add_argument("--preset", default="mmas", choices=sorted(aco.PRESETS))
    s.add_argument("--variant", choices=aco.VARIANTS)
    s.add_argument("--integration", choices=aco.INTEGRATIONS)
    s.add_argument("--update-rule", dest="update_rule", choices=aco.UPDATE_RULES)
    s.add_argument("--termination", choices=aco.TERMINATIONS)
    s.add_argument("--deposit", choices=aco.DEPOSITS)
    s.add_argument("--ants", type=int)
    s.add_argument("--budget", type=int, help="total constructions")
    s.add_argument("--t-ter", dest="t_ter", type=int)
    s.add_argument("--local-search", action="store_true")
    s.add_argument("--model")
    s.add_argument("--prediction", help="CSV from `predict`")
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", help="write the convergence trace CSV here")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("benchmark", help="run every (config, instance, seed) cell of a manifest")
    b.add_argument("manifest")
    b.add_argument("--out")
    b.add_argument("--preset", choices=sorted(aco.PRESETS), help="base preset for every config")
    b.add_argument("--paper-scale", action="store_true", help="10000n constructions, 25 runs")
    b.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("compare", help="rebuild summary and curves from a benchmark report")
    c.add_argument("report")
    c.add_argument("--baseline", required=True)
    c.set_defaults(func=cmd_compare)

    st = sub.add_parser("stats", help="Wilcoxon test or optimality gap")
    sst = st.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    w = sst.add_parser("wilcoxon")
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("--alternative", choices=stats.ALTERNATIVES, default="two-sided")
    gp = sst.add_parser("gap")
    gp.add_argument("--found", type=float, required=True)
    gp.add_argument("--opt", type=float, required=True)
    st.set_defaults(func=cmd_stats)

    pl = sub.add_parser("pipeline", help="label, assemble features and train from a manifest")
    pl.add_argument("manifest")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MlacoError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
