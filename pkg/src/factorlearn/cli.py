"""Command-line interface.

Subcommands: datagen, bench, features, fit, eval, report, hwprobe.
Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys

from . import bench as bench_mod
from . import estimator as est
from . import gbdt
from .cost import MODELS, HardwareSpec
from .datagen import GenError, GridConfig, generate, grid_specs
from .datasets import DatasetError, list_datasets, load_dataset, save_dataset
from .features import FEATURE_NAMES, DatasetProfile, extract_features
from .trainers import TrainConfig

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class CliConfigError(Exception):
    pass


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise CliConfigError(f"expected a comma-separated integer list, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise CliConfigError(f"thread counts must be positive, got {text!r}")
    return vals


def _parse_models(text: str) -> tuple[str, ...]:
    vals = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [v for v in vals if v not in MODELS]
    if bad or not vals:
        raise CliConfigError(f"models must be among {', '.join(MODELS)}; got {text!r}")
    return vals


def _bandwidth_from_args(args) -> float:
    if getattr(args, "hw", None):
        try:
            with open(args.hw) as fh:
                hw = json.load(fh)
            return float(hw["memory_bandwidth"])
        except (OSError, ValueError, KeyError) as e:
            raise CliConfigError(f"bad hardware file {args.hw}: {e}")
    return float(args.bandwidth)


def _load_tables(data_dir, limit=None):
    manifests = list_datasets(data_dir)
    if not manifests:
        raise CliConfigError(f"no datasets found under {data_dir}")
    if limit:
        manifests = manifests[:limit]
    for path in manifests:
        ft, manifest = load_dataset(path)
        yield manifest["id"], ft


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_datagen(args) -> int:
    cfg = GridConfig.from_file(args.config) if args.config else GridConfig()
    if args.seed is not None:
        cfg = GridConfig(**{**cfg.__dict__, "seed": args.seed})
    if args.count is not None:
        cfg = GridConfig(**{**cfg.__dict__, "count": args.count})
    specs = grid_specs(cfg)
    os.makedirs(args.out, exist_ok=True)
    ids = []
    for i, spec in enumerate(specs):
        dataset_id = f"ds{i:04d}"
        ft, params = generate(spec)
        save_dataset(ft, os.path.join(args.out, dataset_id),
                     dataset_id=dataset_id, generator_params=params)
        ids.append(dataset_id)
        if args.verbose and (i + 1) % 25 == 0:
            print(f"generated {i + 1}/{len(specs)}", file=sys.stderr)
    _write_json(os.path.join(args.out, "datagen_summary.json"),
                {"count": len(ids), "datasets": ids, "grid": cfg.__dict__})
    print(f"wrote {len(ids)} datasets to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    threads = _parse_int_list(args.threads)
    models = _parse_models(args.models)
    bandwidth = _bandwidth_from_args(args)
    cfg = bench_mod.BenchConfig(models=models, threads=threads,
                                repeats=args.repeats, warmup=args.repeats > 1,
                                iterations=args.iterations, seed=args.seed,
                                memory_bandwidth=bandwidth)
    os.makedirs(args.out, exist_ok=True)
    bench_mod.warmup_kernels(threads)
    tables = list(_load_tables(args.data, args.limit))

    def progress(done, total, dataset_id):
        if args.verbose:
            print(f"[{done}/{total}] {dataset_id}", file=sys.stderr)

    rows, runs = bench_mod.bench_many(tables, cfg, progress=progress)
    report_path = os.path.join(args.out, "report.csv")
    corpus_path = os.path.join(args.out, "corpus.csv")
    bench_mod.write_report(report_path, rows)
    est.write_corpus(corpus_path, runs)
    flagged = sum(1 for r in rows if r.status != "ok")
    print(f"benchmarked {len(tables)} datasets -> {len(rows)} rows "
          f"({flagged} flagged), corpus of {len(runs)} labeled runs")
    print(f"report: {report_path}\ncorpus: {corpus_path}")
    return EXIT_OK


def cmd_features(args) -> int:
    threads = _parse_int_list(args.threads)
    models = _parse_models(args.models)
    bandwidth = _bandwidth_from_args(args)
    rows = []
    for dataset_id, ft in _load_tables(args.data, args.limit):
        profile = DatasetProfile.from_table(ft)
        for th in threads:
            hw = HardwareSpec(th, bandwidth)
            for model in models:
                cfg = TrainConfig(iterations=args.iterations)
                vec = extract_features(profile, model, cfg, hw)
                rows.append([dataset_id, model, th] + [repr(float(v)) for v in vec])
    import csv as _csv
    with open(args.out, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["dataset", "model", "threads"] + list(FEATURE_NAMES))
        w.writerows(rows)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return EXIT_OK


def _read_corpus_checked(path, minimum=50):
    runs = est.read_corpus(path)
    if len(runs) < minimum:
        raise CliConfigError(f"corpus has {len(runs)} rows; need at least {minimum}")
    return runs


def cmd_fit(args) -> int:
    runs = _read_corpus_checked(args.corpus)
    train, test = est.split_corpus(runs, test_fraction=args.test_fraction,
                                   seed=args.seed)
    params = gbdt.GbdtParams(rounds=args.rounds, max_depth=args.depth,
                             learning_rate=args.lr)
    os.makedirs(args.out, exist_ok=True)
    model = est.fit_estimator(train, params)
    model.save(os.path.join(args.out, "model.json"))
    ablation = est.fit_estimator(train, params, use_hardware_features=False)
    ablation.save(os.path.join(args.out, "model_nohw.json"))
    train_metrics = est.evaluate(est.decide_with_model(model, train), train)
    _write_json(os.path.join(args.out, "fit_summary.json"), {
        "corpus": os.path.abspath(args.corpus),
        "split_seed": args.seed,
        "test_fraction": args.test_fraction,
        "n_train": len(train), "n_test": len(test),
        "params": {"rounds": params.rounds, "max_depth": params.max_depth,
                   "learning_rate": params.learning_rate},
        "train_accuracy": train_metrics["accuracy"],
        "final_train_logloss": model.loss_curve[-1],
    })
    print(f"fitted booster on {len(train)} runs "
          f"(train accuracy {train_metrics['accuracy']:.3f}); "
          f"models in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    runs = _read_corpus_checked(args.corpus)
    _, test = est.split_corpus(runs, test_fraction=args.test_fraction,
                               seed=args.seed)
    if not test:
        raise CliConfigError("test split is empty; lower --test-fraction")
    model = gbdt.GbdtModel.load(os.path.join(args.models_dir, "model.json"))
    ablation = gbdt.GbdtModel.load(os.path.join(args.models_dir, "model_nohw.json"))
    table = {
        "gbdt": est.evaluate(est.decide_with_model(model, test), test),
        "gbdt_no_hardware": est.evaluate(est.decide_with_model(ablation, test), test),
        "tr_fr": est.evaluate(est.decide_recorded_baseline(test), test),
        "always_materialize": est.evaluate(est.decide_always_materialize(test), test),
        "oracle": est.evaluate(est.decide_oracle(test), test),
    }
    payload = {"split_seed": args.seed, "test_fraction": args.test_fraction,
               "n_test": len(test), "estimators": table}
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "metrics.json"), payload)
    import csv as _csv
    with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["estimator", "accuracy", "f1", "overall_speedup", "n"])
        for name, m in table.items():
            w.writerow([name, repr(m["accuracy"]), repr(m["f1"]),
                        repr(m["overall_speedup"]), m["n"]])
    for name, m in table.items():
        print(f"{name:>20s}  acc={m['accuracy']:.3f}  f1={m['f1']:.3f}  "
              f"speedup={m['overall_speedup']:.3f}")
    return EXIT_OK


def _fmt_table(headers, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows
              else len(str(h)) for i, h in enumerate(headers)]
    def line(vals):
        return "  ".join(str(v).ljust(w) for v, w in zip(vals, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def cmd_report(args) -> int:
    lines = []
    if args.metrics and os.path.exists(args.metrics):
        with open(args.metrics) as fh:
            metrics = json.load(fh)
        rows = [[name, f"{m['accuracy']:.3f}", f"{m['f1']:.3f}",
                 f"{m['overall_speedup']:.3f}", m["n"]]
                for name, m in metrics["estimators"].items()]
        lines.append("Estimator comparison (held-out)")
        lines.append(_fmt_table(["estimator", "accuracy", "f1", "speedup", "n"], rows))
        lines.append("")
    bench_rows = bench_mod.read_report(args.bench) if args.bench else []
    ok_rows = [r for r in bench_rows if r["status"] == "ok"]
    groups: dict[tuple[str, str], list[float]] = {}
    for r in ok_rows:
        groups.setdefault((r["model"], r["threads"]), []).append(float(r["speedup"]))
    summary = []
    for (model, th) in sorted(groups):
        sp = sorted(groups[(model, th)])
        med = sp[len(sp) // 2]
        frac = sum(1 for v in sp if v > 1.0) / len(sp)
        summary.append([model, th, len(sp), f"{med:.3f}",
                        f"{sum(sp) / len(sp):.3f}", f"{100 * frac:.0f}%"])
    lines.append("Dual-path speedups by model and thread count")
    if summary:
        lines.append(_fmt_table(["model", "threads", "n", "median", "mean",
                                 "factorized_faster"], summary))
    else:
        lines.append("(no benchmark rows)")
    flagged = [r for r in bench_rows if r["status"] != "ok"]
    lines.append("")
    lines.append(f"Rows flagged (excluded from corpus): {len(flagged)}")
    for r in flagged[:20]:
        lines.append(f"  {r['dataset']} {r['model']} threads={r['threads']}: {r['status']}")
    text = "\n".join(lines) + "\n"
    os.makedirs(args.out, exist_ok=True)
    txt_path = os.path.join(args.out, "report.txt")
    with open(txt_path, "w") as fh:
        fh.write(text)
    import csv as _csv
    with open(os.path.join(args.out, "speedup_summary.csv"), "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["model", "threads", "n", "median_speedup", "mean_speedup",
                    "factorized_faster_fraction"])
        w.writerows(summary)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_hwprobe(args) -> int:
    bw = bench_mod.measure_bandwidth(args.size_mb)
    payload = {
        "parallelism": os.cpu_count() or 1,
        "memory_bandwidth": bw,
        "label": f"{platform.machine()} {platform.system()}",
    }
    _write_json(args.out, payload)
    print(f"parallelism={payload['parallelism']} "
          f"memory_bandwidth={bw / 1e9:.2f} GB/s -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="factorlearn",
                                description="Factorized-vs-materialized "
                                "training benchmark and estimator toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("datagen", help="generate a synthetic dataset grid")
    d.add_argument("--config", help="grid config JSON")
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--count", type=int, default=None)
    d.add_argument("--verbose", action="store_true")
    d.set_defaults(func=cmd_datagen)

    b = sub.add_parser("bench", help="dual-path benchmark over datasets")
    b.add_argument("--data", required=True, help="dataset directory")
    b.add_argument("--out", required=True)
    b.add_argument("--models", default=",".join(MODELS))
    b.add_argument("--threads", default="1,2")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--iterations", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--limit", type=int, default=None)
    b.add_argument("--bandwidth", type=float, default=1e9)
    b.add_argument("--hw", help="hardware JSON from hwprobe")
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("features", help="extract feature vectors only")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True, help="output CSV path")
    f.add_argument("--models", default=",".join(MODELS))
    f.add_argument("--threads", default="1,2")
    f.add_argument("--iterations", type=int, default=20)
    f.add_argument("--limit", type=int, default=None)
    f.add_argument("--bandwidth", type=float, default=1e9)
    f.add_argument("--hw")
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("fit", help="train the decision booster on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--test-fraction", type=float, default=0.2)
    t.add_argument("--rounds", type=int, default=100)
    t.add_argument("--depth", type=int, default=4)
    t.add_argument("--lr", type=float, default=0.1)
    t.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score estimators on the held-out split")
    e.add_argument("--corpus", required=True)
    e.add_argument("--models-dir", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--test-fraction", type=float, default=0.2)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="render text/CSV tables")
    r.add_argument("--bench", help="bench report.csv")
    r.add_argument("--metrics", help="eval metrics.json")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    h = sub.add_parser("hwprobe", help="measure hardware characteristics")
    h.add_argument("--out", required=True)
    h.add_argument("--size-mb", type=int, default=64)
    h.set_defaults(func=cmd_hwprobe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage, which matches the config-error code
        return int(e.code or 0)
    try:
        return args.func(args)
    except (CliConfigError, GenError, DatasetError, est.EstimatorError,
            gbdt.GbdtError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as e:  # pragma: no cover - defensive
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
