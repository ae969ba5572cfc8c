"""Command-line entry points: generate, fit, evaluate, benchmark.

Every command reads a single JSON configuration document (--config) with
strict key checking, and exits 0 on success, 2 on configuration or input
errors, and 3 on numerical failure (divergent fit, non-stationary rollout).
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as lio
from . import plots
from .errors import ConfigError, LatvarError, SimulationError, TrainingDivergenceError
from .evaluation import EVALUATION_SCOPE, MetricsReport, aggregate, score_against_truth
from .likelihood import PriorConfig
from .model import ModelDims
from .simulate import (
    GenConfig,
    check_assumptions,
    sample_ground_truth,
    simulate_series,
)
from .vi import TrainConfig, fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _check_keys(doc: dict, allowed, where: str, required=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, found {type(doc).__name__}")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(doc))
    if missing:
        raise ConfigError(f"{where}: missing required keys {missing}")


def _interval(doc, key, default):
    value = doc.get(key, default)
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{key} must be a two-element interval")
    return (float(value[0]), float(value[1]))


def parse_gen_config(doc: dict, seed_override=None, where="generate config") -> tuple[GenConfig, list[int]]:
    _check_keys(
        doc,
        allowed=("dims", "latent_ratio", "avg_in_degree", "noise_family",
                 "weight_mean_range", "weight_std_range", "stationarity_cap",
                 "burn_in", "seed", "seeds", "out"),
        where=where,
        required=("dims",),
    )
    ddoc = doc["dims"]
    _check_keys(ddoc, allowed=("m", "T", "C", "n"), where=f"{where}.dims", required=("m", "T"))
    dims = ModelDims(
        m=int(ddoc["m"]),
        n=int(ddoc.get("n", 0)),
        T=int(ddoc["T"]),
        C=int(ddoc.get("C", 5)),
    )
    config = GenConfig(
        dims=dims,
        avg_in_degree=float(doc.get("avg_in_degree", 1.25)),
        latent_ratio=(None if doc.get("latent_ratio") is None else float(doc["latent_ratio"])),
        noise_family=doc.get("noise_family", "gmm"),
        weight_mean_range=_interval(doc, "weight_mean_range", (0.5, 0.9)),
        weight_std_range=_interval(doc, "weight_std_range", (0.001, 0.01)),
        stationarity_cap=float(doc.get("stationarity_cap", 0.95)),
        burn_in=int(doc.get("burn_in", 100)),
        seed=int(doc.get("seed", 0)),
    )
    if seed_override is not None:
        seeds = [int(seed_override)]
    elif "seeds" in doc:
        seeds = [int(s) for s in doc["seeds"]]
        if not seeds:
            raise ConfigError(f"{where}: seeds list is empty")
    else:
        seeds = [config.seed]
    return config, seeds


def parse_train_config(doc: dict, seed_override=None, where="train config") -> TrainConfig:
    _check_keys(
        doc,
        allowed=("lam", "lam0_start", "lam0_end", "lam0_decay", "mc_samples",
                 "learning_rate", "max_epochs", "patience", "grad_check",
                 "seed", "objective_mode"),
        where=where,
    )
    defaults = TrainConfig()
    return TrainConfig(
        lam=float(doc.get("lam", defaults.lam)),
        lam0_start=float(doc.get("lam0_start", defaults.lam0_start)),
        lam0_end=float(doc.get("lam0_end", defaults.lam0_end)),
        lam0_decay=(None if doc.get("lam0_decay") is None else float(doc["lam0_decay"])),
        mc_samples=int(doc.get("mc_samples", defaults.mc_samples)),
        learning_rate=float(doc.get("learning_rate", defaults.learning_rate)),
        max_epochs=int(doc.get("max_epochs", defaults.max_epochs)),
        patience=int(doc.get("patience", defaults.patience)),
        grad_check=bool(doc.get("grad_check", defaults.grad_check)),
        seed=int(seed_override if seed_override is not None else doc.get("seed", defaults.seed)),
        objective_mode=doc.get("objective_mode", defaults.objective_mode),
    )


def parse_prior(doc, where="prior config") -> PriorConfig:
    if doc is None:
        return PriorConfig()
    _check_keys(doc, allowed=("rho", "w_mean", "w_std"), where=where)

    def load(key, default):
        value = doc.get(key, default)
        return np.asarray(value, dtype=float) if isinstance(value, list) else float(value)

    return PriorConfig(rho=load("rho", 0.5), w_mean=load("w_mean", 0.0), w_std=load("w_std", 1.0))


def _gen_config_echo(config: GenConfig, seed: int) -> dict:
    dims = config.resolved_dims()
    return {
        "dims": {"m": dims.m, "n": dims.n, "T": dims.T, "C": dims.C},
        "avg_in_degree": config.avg_in_degree,
        "latent_ratio": config.latent_ratio,
        "noise_family": config.noise_family,
        "weight_mean_range": list(config.weight_mean_range),
        "weight_std_range": list(config.weight_std_range),
        "stationarity_cap": config.stationarity_cap,
        "burn_in": config.burn_in,
        "seed": seed,
    }


def _generate_one(config: GenConfig, seed: int):
    rng = np.random.default_rng(seed)
    gt = sample_ground_truth(config, rng)
    dataset = simulate_series(gt, config.resolved_dims().T, rng, burn_in=config.burn_in)
    meta = {
        "generator_config": _gen_config_echo(config, seed),
        "assumption_warnings": check_assumptions(dataset.truth),
    }
    return dataset, meta


def cmd_generate(config_path, out_dir=None, seed_override=None, verbose=False) -> int:
    doc = lio.read_json(config_path)
    config, seeds = parse_gen_config(doc, seed_override)
    out = out_dir or doc.get("out") or "."
    os.makedirs(out, exist_ok=True)
    for seed in seeds:
        dataset, meta = _generate_one(config, seed)
        data_path = os.path.join(out, f"dataset_seed{seed}.csv")
        truth_path = os.path.join(out, f"truth_seed{seed}.json")
        lio.write_dataset_csv(dataset, data_path)
        lio.write_truth(dataset.truth, truth_path, meta)
        print(f"wrote {data_path} and {truth_path}")
        if verbose and meta["assumption_warnings"]:
            for w in meta["assumption_warnings"]:
                print(f"  warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(config_path, dataset_path=None, out_dir=None, seed_override=None,
            verbose=False) -> int:
    doc = lio.read_json(config_path)
    _check_keys(doc, allowed=("n", "C", "dataset", "out", "train", "prior"),
                where="fit config", required=("n",))
    data_path = dataset_path or doc.get("dataset")
    if not data_path:
        raise ConfigError("no dataset given (positional argument or 'dataset' config key)")
    dataset = lio.read_dataset_csv(data_path)
    dims = ModelDims(m=dataset.m, n=int(doc["n"]), T=dataset.T, C=int(doc.get("C", 5)))
    train_config = parse_train_config(doc.get("train", {}), seed_override)
    prior = parse_prior(doc.get("prior"))
    out = out_dir or doc.get("out") or "."
    os.makedirs(out, exist_ok=True)

    progress = None
    if verbose:
        def progress(epoch, value, lam0):
            if epoch % 100 == 0 or epoch == train_config.max_epochs - 1:
                print(f"epoch {epoch} objective {value:.6f} lam0 {lam0:.4f}",
                      file=sys.stderr)

    try:
        fitted = fit(dataset, dims, prior=prior, config=train_config, progress=progress)
    except TrainingDivergenceError as exc:
        trace_path = os.path.join(out, "divergence_trace.json")
        lio.write_json(trace_path, {"error": str(exc), "objective_trace": exc.trace})
        print(f"fit diverged: {exc} (trace at {trace_path})", file=sys.stderr)
        return EXIT_NUMERIC
    ckpt_path = os.path.join(out, "checkpoint.json")
    lio.write_checkpoint(lio.Checkpoint.from_fitted(fitted), ckpt_path)
    print(f"wrote {ckpt_path}")
    return EXIT_OK


def cmd_evaluate(config_path, checkpoint_path=None, truth_path=None, out_dir=None,
                 verbose=False) -> int:
    doc = lio.read_json(config_path)
    _check_keys(doc, allowed=("checkpoint", "truth", "tau", "out"), where="evaluate config")
    ckpt_path = checkpoint_path or doc.get("checkpoint")
    tru_path = truth_path or doc.get("truth")
    if not ckpt_path or not tru_path:
        raise ConfigError("evaluate needs checkpoint and truth paths (arguments or config keys)")
    tau = float(doc.get("tau", 0.5))
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie in (0,1), got {tau}")
    ckpt = lio.read_checkpoint(ckpt_path)
    truth = lio.read_truth(tru_path)
    if (ckpt.dims.m, ckpt.dims.n) != (truth.dims.m, truth.dims.n):
        raise ConfigError(
            f"dims mismatch: checkpoint (m={ckpt.dims.m}, n={ckpt.dims.n}) vs "
            f"truth (m={truth.dims.m}, n={truth.dims.n})"
        )
    report, latent_match = score_against_truth(ckpt.edge_prob, ckpt.w_mean, truth, tau)
    out = out_dir or doc.get("out") or "."
    os.makedirs(out, exist_ok=True)
    metrics_path = os.path.join(out, "metrics.json")
    lio.write_json(metrics_path, lio.metrics_to_doc(report, tau, latent_match, EVALUATION_SCOPE))
    print(
        f"precision {report.precision:.4f} recall {report.recall:.4f} f1 {report.f1:.4f}"
        f" -> {metrics_path}"
    )
    return EXIT_OK


# -- benchmark ----------------------------------------------------------------

GRID_KEYS = ("m", "T", "d", "r", "noise_family")


def _cell_id(point: dict, seed: int) -> str:
    return (
        f"m{point['m']}_T{point['T']}_d{point['d']}_r{point['r']}_"
        f"{point['noise_family']}_seed{seed}"
    )


def run_benchmark_cell(spec: dict) -> dict:
    """Generate, fit, and evaluate one (grid point, seed) cell.

    Module-level so process pools can pickle it.  Returns the cell record for
    the report; failures are captured rather than raised.
    """
    point = spec["point"]
    seed = spec["seed"]
    cell_dir = spec["cell_dir"]
    record = {"grid_point": point, "seed": seed, "status": "ok", "error": None,
              "metrics": None}
    try:
        os.makedirs(cell_dir, exist_ok=True)
        gen_doc = dict(spec["gen_base"])
        gen_doc["dims"] = {"m": point["m"], "T": point["T"], "C": gen_doc.pop("C", 5)}
        gen_doc["avg_in_degree"] = point["d"]
        gen_doc["latent_ratio"] = point["r"]
        gen_doc["noise_family"] = point["noise_family"]
        config, _ = parse_gen_config({**gen_doc, "seed": seed}, where="benchmark.gen")
        dataset, meta = _generate_one(config, seed)
        lio.write_dataset_csv(dataset, os.path.join(cell_dir, "dataset.csv"))
        lio.write_truth(dataset.truth, os.path.join(cell_dir, "truth.json"), meta)

        dims = dataset.truth.dims
        train_config = parse_train_config({**spec["train"], "seed": seed},
                                          where="benchmark.train")
        prior = parse_prior(spec.get("prior"))
        fit_dims = ModelDims(m=dims.m, n=dims.n, T=dims.T, C=int(spec.get("C", 5)))
        fitted = fit(dataset, fit_dims, prior=prior, config=train_config)
        ckpt = lio.Checkpoint.from_fitted(fitted)
        lio.write_checkpoint(ckpt, os.path.join(cell_dir, "checkpoint.json"))

        report, latent_match = score_against_truth(
            ckpt.edge_prob, ckpt.w_mean, dataset.truth, spec["tau"]
        )
        metrics_doc = lio.metrics_to_doc(report, spec["tau"], latent_match, EVALUATION_SCOPE)
        lio.write_json(os.path.join(cell_dir, "metrics.json"), metrics_doc)
        record["metrics"] = metrics_doc
    except (LatvarError, np.linalg.LinAlgError, OSError) as exc:
        record["status"] = "error"
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def cmd_benchmark(config_path, out_dir=None, workers=None, seed_override=None,
                  verbose=False) -> int:
    doc = lio.read_json(config_path)
    _check_keys(
        doc,
        allowed=("grid", "seeds", "seed_count", "gen", "train", "prior", "tau",
                 "workers", "out", "C"),
        where="benchmark config",
        required=("grid",),
    )
    grid_doc = doc["grid"]
    _check_keys(grid_doc, allowed=GRID_KEYS, where="benchmark.grid")
    axes = {
        "m": [int(v) for v in grid_doc.get("m", [20])],
        "T": [int(v) for v in grid_doc.get("T", [1000])],
        "d": [float(v) for v in grid_doc.get("d", [1.25])],
        "r": [float(v) for v in grid_doc.get("r", [0.4])],
        "noise_family": list(grid_doc.get("noise_family", ["gmm"])),
    }
    for name, values in axes.items():
        if not values:
            raise ConfigError(f"benchmark.grid.{name} is empty")
    if seed_override is not None:
        seeds = [int(seed_override)]
    elif "seeds" in doc:
        seeds = [int(s) for s in doc["seeds"]]
    else:
        seeds = list(range(1, int(doc.get("seed_count", 5)) + 1))
    if not seeds:
        raise ConfigError("benchmark needs at least one seed")
    tau = float(doc.get("tau", 0.5))
    out = out_dir or doc.get("out") or "."
    os.makedirs(out, exist_ok=True)
    gen_base = dict(doc.get("gen", {}))
    _check_keys(gen_base,
                allowed=("weight_mean_range", "weight_std_range",
                         "stationarity_cap", "burn_in", "C"),
                where="benchmark.gen")

    points = [dict(zip(axes.keys(), combo)) for combo in itertools.product(*axes.values())]
    specs = []
    for point in points:
        for seed in seeds:
            specs.append({
                "point": point,
                "seed": seed,
                "cell_dir": os.path.join(out, "cells", _cell_id(point, seed)),
                "gen_base": gen_base,
                "train": dict(doc.get("train", {})),
                "prior": doc.get("prior"),
                "tau": tau,
                "C": doc.get("C", 5),
            })

    n_workers = int(workers if workers is not None else doc.get("workers", 1))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            cells = list(pool.map(run_benchmark_cell, specs))
    else:
        cells = [run_benchmark_cell(spec) for spec in specs]

    aggregates = []
    for point in points:
        ok = [c for c in cells
              if c["grid_point"] == point and c["status"] == "ok"]
        row = {"grid_point": point, "n_seeds_ok": len(ok),
               "n_seeds_total": len(seeds)}
        if ok:
            agg = aggregate([
                MetricsReport(
                    precision=c["metrics"]["precision"],
                    recall=c["metrics"]["recall"],
                    f1=c["metrics"]["f1"],
                    true_positives=c["metrics"]["true_positives"],
                    predicted_edges=c["metrics"]["predicted_edges"],
                    actual_edges=c["metrics"]["actual_edges"],
                ) for c in ok
            ])
            row.update({
                "precision_mean": agg.precision, "precision_sd": agg.precision_sd,
                "recall_mean": agg.recall, "recall_sd": agg.recall_sd,
                "f1_mean": agg.f1, "f1_sd": agg.f1_sd,
            })
        else:
            row.update({f"{metric}_{stat}": None
                        for metric in ("precision", "recall", "f1")
                        for stat in ("mean", "sd")})
        aggregates.append(row)
        if verbose:
            print(f"{point}: {row.get('f1_mean')}", file=sys.stderr)

    report_doc = {
        "format_version": lio.FORMAT_VERSION,
        "kind": "benchmark_report",
        "scope": EVALUATION_SCOPE,
        "config": {
            "grid": axes, "seeds": seeds, "tau": tau,
            "gen": gen_base, "train": dict(doc.get("train", {})),
            "C": doc.get("C", 5), "workers": n_workers,
        },
        "cells": cells,
        "aggregates": aggregates,
    }
    report_path = os.path.join(out, "report.json")
    lio.write_json(report_path, report_doc)
    csv_path = os.path.join(out, "report.csv")
    _write_report_csv(aggregates, csv_path)
    figures = plots.render_report_figures(aggregates, out)
    print(f"wrote {report_path}, {csv_path}"
          + (f" and {len(figures)} figure(s)" if figures else ""))
    failed = [c for c in cells if c["status"] != "ok"]
    if failed:
        print(f"{len(failed)} of {len(cells)} cells failed; see report for details",
              file=sys.stderr)
    return EXIT_OK


def _write_report_csv(aggregates, path):
    import csv as _csv

    columns = ["m", "T", "d", "r", "noise_family", "n_seeds_ok", "n_seeds_total",
               "precision_mean", "precision_sd", "recall_mean", "recall_sd",
               "f1_mean", "f1_sd"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in aggregates:
            point = row["grid_point"]
            values = [point[k] for k in GRID_KEYS]
            values += [row["n_seeds_ok"], row["n_seeds_total"]]
            for metric in ("precision", "recall", "f1"):
                for stat in ("mean", "sd"):
                    v = row.get(f"{metric}_{stat}")
                    values.append("" if v is None else repr(float(v)))
            writer.writerow(values)


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latvar",
        description="Causal discovery for lag-1 VAR time series under latent interference",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--verbose", action="store_true", help="progress lines on stderr")
        if workers:
            p.add_argument("--workers", type=int, default=None,
                           help="concurrent benchmark cells")

    p_gen = sub.add_parser("generate", help="sample ground-truth models and datasets")
    common(p_gen)

    p_fit = sub.add_parser("fit", help="train the variational estimator on a dataset")
    common(p_fit)
    p_fit.add_argument("dataset", nargs="?", default=None, help="dataset CSV path")

    p_eval = sub.add_parser("evaluate", help="score a checkpoint against ground truth")
    common(p_eval)
    p_eval.add_argument("checkpoint", nargs="?", default=None, help="checkpoint JSON path")
    p_eval.add_argument("truth", nargs="?", default=None, help="ground-truth JSON path")

    p_bench = sub.add_parser("benchmark", help="sweep a parameter grid end to end")
    common(p_bench, workers=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args.config, args.out, args.seed, args.verbose)
        if args.command == "fit":
            return cmd_fit(args.config, args.dataset, args.out, args.seed, args.verbose)
        if args.command == "evaluate":
            return cmd_evaluate(args.config, args.checkpoint, args.truth, args.out,
                                args.verbose)
        if args.command == "benchmark":
            return cmd_benchmark(args.config, args.out, args.workers, args.seed,
                                 args.verbose)
        raise ConfigError(f"unknown command {args.command!r}")
    except (TrainingDivergenceError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LatvarError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
