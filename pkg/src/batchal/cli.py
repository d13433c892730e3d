"""Command line front end: run experiments, compare runs, benchmark samplers.

Subcommands:

* run            -- execute one experiment config, streaming per-round CSVs
* compare        -- aggregate finished runs into a penalty matrix and CDFs
* bench-samplers -- time k-means++ seeding against the k-DPP chain
* diag           -- re-emit per-round batch diagnostics from stored runs

Config files are JSON. Keys: dataset (loader spec), selector (name or
{name, tau, eta, gamma}), M initial labels, B batch size, T rounds,
R repetitions, seed, model (MLP hyperparameters). Flags override the
corresponding config entries.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import load_csv, load_libsvm, synth_gaussian_mixture
from .loop import ExperimentConfig, accuracy_table, errors_at_budget, run_experiment
from .mlp import MlpConfig
from .results_io import MANIFEST_NAME, ResultsWriter, _utc_now, read_manifest, read_results, write_manifest
from .samplers import KNOWN_SELECTORS, SelectorKind, benchmark_samplers
from .stats import SettingKey, budget_schedule, compute_n0, normalized_error_cdf, penalty_matrix


def _fail(message):
    raise SystemExit(f"error: {message}")


def _build_dataset(spec):
    if not isinstance(spec, dict) or "kind" not in spec:
        _fail('config "dataset" must be an object with a "kind" key')
    kind = spec["kind"]
    opts = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "synth_gaussian":
            return synth_gaussian_mixture(**opts)
        if kind == "csv":
            return load_csv(**opts)
        if kind == "libsvm":
            return load_libsvm(**opts)
    except (TypeError, ValueError, OSError) as exc:
        _fail(f"could not build dataset: {exc}")
    _fail(f'unknown dataset kind {kind!r} (expected "synth_gaussian", "csv", or "libsvm")')


def _build_selector(spec):
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        _fail('config "selector" must be a name or an object with a "name" key')
    allowed = {"name", "tau", "eta", "gamma"}
    unknown = set(spec) - allowed
    if unknown:
        _fail(f"unknown selector keys {sorted(unknown)}")
    try:
        return SelectorKind(**spec).validate()
    except (TypeError, ValueError) as exc:
        _fail(f"bad selector: {exc}")


def _build_model(spec, dataset):
    spec = dict(spec or {})
    for key, value in (("input_dim", dataset.input_dim), ("num_classes", dataset.num_classes)):
        if key in spec and spec[key] != value:
            _fail(f"model {key} {spec[key]} does not match dataset ({value})")
        spec[key] = value
    try:
        return MlpConfig(**spec).validate()
    except (TypeError, ValueError) as exc:
        _fail(f"bad model config: {exc}")


def cmd_run(args):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"could not read config {args.config}: {exc}")
    if args.selector:
        cfg["selector"] = args.selector
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.reps is not None:
        cfg["R"] = args.reps
    for key in ("dataset", "selector"):
        if key not in cfg:
            _fail(f'config is missing the "{key}" key')

    dataset = _build_dataset(cfg["dataset"])
    selector = _build_selector(cfg["selector"])
    model = _build_model(cfg.get("model"), dataset)
    config = ExperimentConfig(
        dataset=dataset.name,
        selector=selector,
        initial_labels=int(cfg.get("M", 100)),
        batch_size=int(cfg.get("B", 100)),
        rounds=int(cfg.get("T", 10)),
        repetitions=int(cfg.get("R", 5)),
        base_seed=int(cfg.get("seed", 0)),
        model=model,
    )
    try:
        config.validate()
    except ValueError as exc:
        _fail(str(exc))

    out_dir = Path(args.out_dir or f"runs/{dataset.name}-{selector.name}-seed{config.base_seed}")
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _utc_now()
    writers = {}

    def on_round(log):
        if log.rep not in writers:
            writers[log.rep] = ResultsWriter(out_dir / f"results_rep{log.rep}.csv")
        writers[log.rep].append(log)
        if not args.quiet:
            print(
                f"[{selector.name}] rep {log.rep} round {log.round}: "
                f"{log.labels} labels, test acc {log.test_accuracy:.4f}",
                flush=True,
            )

    try:
        run_experiment(config, dataset, on_round=on_round)
    finally:
        for writer in writers.values():
            writer.close()

    snapshot = {
        "dataset": cfg["dataset"],
        "selector": asdict(selector),
        "M": config.initial_labels,
        "B": config.batch_size,
        "T": config.rounds,
        "R": config.repetitions,
        "seed": config.base_seed,
        "model": asdict(model),
    }
    write_manifest(
        out_dir / MANIFEST_NAME,
        snapshot,
        config.base_seed,
        [config.base_seed + r for r in range(config.repetitions)],
        [f"results_rep{r}.csv" for r in sorted(writers)],
        __version__,
        created=started,
        extra={
            "finished_utc": _utc_now(),
            "dataset_name": dataset.name,
            "selector_name": selector.name,
            "arch": f"mlp-h{model.hidden_dim}",
            "batch_size": config.batch_size,
        },
    )
    if not args.quiet:
        print(f"wrote results and manifest to {out_dir}")
    return 0


def _load_run(run_dir):
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir / MANIFEST_NAME)
    logs = []
    for name in manifest["result_files"]:
        logs.extend(read_results(run_dir / name))
    return manifest, logs


def cmd_compare(args):
    combos = {}
    for run_dir in args.run_dirs:
        try:
            manifest, logs = _load_run(run_dir)
        except (OSError, ValueError, KeyError) as exc:
            _fail(f"could not load run {run_dir}: {exc}")
        combo = (manifest["dataset_name"], int(manifest["batch_size"]), manifest["arch"])
        per_alg = combos.setdefault(combo, {})
        name = manifest["selector_name"]
        if name in per_alg:
            _fail(f"duplicate runs for selector {name!r} in combination {combo}")
        per_alg[name] = logs

    errors_by_setting = {}
    combo_rows = []
    for (dataset, batch_size, arch), per_alg in sorted(combos.items()):
        if args.baseline not in per_alg:
            _fail(f"combination ({dataset}, {batch_size}, {arch}) has no {args.baseline!r} run to anchor n0")
        budgets, table = accuracy_table(per_alg[args.baseline])
        n0 = compute_n0(budgets, table.mean(axis=0).tolist())
        schedule = budget_schedule(min(budgets), batch_size, n0)
        combo_rows.append((dataset, batch_size, arch, n0, schedule))
        for budget in schedule:
            key = SettingKey(dataset=dataset, batch_size=batch_size, arch=arch, budget=budget)
            errors_by_setting[key] = {
                alg: errors_at_budget(logs, budget) for alg, logs in per_alg.items()
            }

    if not errors_by_setting:
        _fail("no comparable budgets: every schedule came out empty")
    algorithms = sorted({alg for per_alg in errors_by_setting.values() for alg in per_alg})
    try:
        pm = penalty_matrix(errors_by_setting, algorithms)
        cdf = normalized_error_cdf(errors_by_setting, algorithms, baseline=args.baseline)
    except ValueError as exc:
        _fail(str(exc))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    matrix_path = out_dir / "penalty_matrix.csv"
    with open(matrix_path, "w") as fh:
        fh.write("algorithm," + ",".join(algorithms) + "\n")
        for i, alg in enumerate(algorithms):
            fh.write(alg + "," + ",".join(repr(float(v)) for v in pm.matrix[i]) + "\n")

    cdf_path = out_dir / "cdf.csv"
    with open(cdf_path, "w") as fh:
        fh.write("algorithm,normalized_error,cum_weight\n")
        for alg in algorithms:
            for x, w in cdf.curves[alg]:
                fh.write(f"{alg},{float(x)!r},{float(w)!r}\n")

    settings_path = out_dir / "settings.csv"
    with open(settings_path, "w") as fh:
        fh.write("dataset,batch_size,arch,n0,budgets\n")
        for dataset, batch_size, arch, n0, schedule in combo_rows:
            fh.write(f"{dataset},{batch_size},{arch},{n0},{';'.join(map(str, schedule))}\n")

    for key in cdf.skipped:
        print(f"warning: skipped {key} (baseline error is zero there)", file=sys.stderr)

    print(f"compared {len(algorithms)} selectors over {len(errors_by_setting)} settings")
    print(f"penalty matrix -> {matrix_path}")
    print(f"normalized-error CDFs -> {cdf_path}")
    print(f"schedules -> {settings_path}")
    if args.plot:
        _render_cdf(out_dir / "cdf.svg", cdf, algorithms)
    return 0


def _render_cdf(path, cdf, algorithms):
    plt = _pyplot()
    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for alg in algorithms:
        curve = cdf.curves[alg]
        if curve.size == 0:
            continue
        xs = np.concatenate([[curve[0, 0]], curve[:, 0]])
        ys = np.concatenate([[0.0], curve[:, 1]])
        ax.step(xs, ys, where="post", label=alg)
    ax.set_xlabel("error normalized by baseline")
    ax.set_ylabel("cumulative weight")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    print(f"plot -> {path}")


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        return plt
    except ImportError:
        print("warning: matplotlib not installed, skipping plot", file=sys.stderr)
        return None


def cmd_bench_samplers(args):
    result = benchmark_samplers(args.pool_size, args.dim, args.batch_size, seed=args.seed, tau=args.tau)
    print(
        f"pool {result['n']} x dim {result['dim']}, batch {result['k']}, chain length {result['tau']}"
    )
    print(f"kmeanspp  {result['kmeanspp_seconds']:.4f} s")
    print(f"kdpp      {result['kdpp_seconds']:.4f} s")
    print(f"kdpp / kmeanspp = {result['kdpp_over_kmeanspp']:.2f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("sampler,seconds,n,dim,k,tau\n")
            for sampler, seconds in (("kmeanspp", result["kmeanspp_seconds"]), ("kdpp", result["kdpp_seconds"])):
                fh.write(f"{sampler},{seconds!r},{result['n']},{result['dim']},{result['k']},{result['tau']}\n")
        print(f"timings -> {args.out}")
    return 0


def cmd_diag(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for run_dir in args.run_dirs:
        try:
            manifest, logs = _load_run(run_dir)
        except (OSError, ValueError, KeyError) as exc:
            _fail(f"could not load run {run_dir}: {exc}")
        selector = manifest["selector_name"]
        for log in logs:
            if log.round == 0:
                continue
            rows.append((selector, log.rep, log.round, log.labels, log.log_gram_det, log.mean_norm))
    path = out_dir / "diagnostics.csv"
    with open(path, "w") as fh:
        fh.write("selector,rep,round,labels,log_gram_det,mean_norm\n")
        for selector, rep, rnd, labels, lgd, mn in rows:
            fh.write(f"{selector},{rep},{rnd},{labels},{float(lgd)!r},{float(mn)!r}\n")
    print(f"diagnostics -> {path}")
    if args.plot:
        _render_diag(out_dir / "diagnostics.svg", rows)
    return 0


def _render_diag(path, rows):
    plt = _pyplot()
    if plt is None:
        return
    by_selector = {}
    for selector, _rep, rnd, _labels, lgd, _mn in rows:
        by_selector.setdefault(selector, {}).setdefault(rnd, []).append(lgd)
    fig, ax = plt.subplots(figsize=(6, 4))
    for selector, per_round in sorted(by_selector.items()):
        xs = sorted(per_round)
        ys = []
        for x in xs:
            vals = [v for v in per_round[x] if np.isfinite(v)]
            ys.append(np.mean(vals) if vals else np.nan)
        ax.plot(xs, ys, marker="o", label=selector)
    ax.set_xlabel("round")
    ax.set_ylabel("mean log Gram det (finite reps)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    print(f"plot -> {path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="batchal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"batchal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config base seed")
    p_run.add_argument("--out-dir", default=None, help="directory for results and manifest")
    p_run.add_argument("--selector", default=None, choices=KNOWN_SELECTORS, help="override the config selector")
    p_run.add_argument("--reps", type=int, default=None, help="override the repetition count")
    p_run.add_argument("--quiet", action="store_true", help="suppress per-round progress lines")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="aggregate runs into a penalty matrix and CDFs")
    p_cmp.add_argument("run_dirs", nargs="+", help="run directories written by the run subcommand")
    p_cmp.add_argument("--out-dir", required=True)
    p_cmp.add_argument("--baseline", default="rand", help="selector used to anchor n0 and normalize errors")
    p_cmp.add_argument("--plot", action="store_true", help="also render an SVG when matplotlib is available")
    p_cmp.set_defaults(func=cmd_compare)

    p_bench = sub.add_parser("bench-samplers", help="time kmeans++ seeding vs the k-DPP chain")
    p_bench.add_argument("--pool-size", type=int, default=10000)
    p_bench.add_argument("--dim", type=int, default=192)
    p_bench.add_argument("--batch-size", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--tau", type=int, default=None, help="chain length (default floor(5 k ln k))")
    p_bench.add_argument("--out", default=None, help="write timings to this CSV file")
    p_bench.set_defaults(func=cmd_bench_samplers)

    p_diag = sub.add_parser("diag", help="re-emit per-round batch diagnostics from stored runs")
    p_diag.add_argument("run_dirs", nargs="+")
    p_diag.add_argument("--out-dir", required=True)
    p_diag.add_argument("--plot", action="store_true")
    p_diag.set_defaults(func=cmd_diag)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
