"""Batch command-line entry points: simulate, train, compare.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure
(divergence).  `train` fans out over repeated --seed flags as independent
processes, capped by the SBFNN_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluation, network, oracle, training
from .autodiff import ContractError
from .biomodels import MODEL_NAMES, get_model
from .oracle import DivergenceError
from .training import ConfigError, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbfnn",
                                     description="Fourier-enhanced dynamics workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a model and write a trajectory CSV")
    sim.add_argument("--model", required=True, choices=MODEL_NAMES)
    sim.add_argument("--samples", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--config", help="JSON file with model parameter overrides")
    sim.add_argument("--out", default="runs/simulate")
    sim.add_argument("--plot", action="store_true", help="also write an SVG plot")

    tr = sub.add_parser("train", help="train one or more seeds from a config")
    tr.add_argument("--config", help="JSON config mirroring the TrainConfig fields")
    tr.add_argument("--model", choices=MODEL_NAMES)
    tr.add_argument("--seed", type=int, action="append",
                    help="repeatable; each seed becomes one run directory")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--samples", type=int, help="training sample count")
    tr.add_argument("--arch", choices=("sbfnn", "pinn"))
    tr.add_argument("--activation",
                    choices=("adaptive",) + tuple(network.ACTIVATIONS))
    tr.add_argument("--constraint", choices=("on", "off"))
    tr.add_argument("--out", default="runs/train")
    tr.add_argument("--plot", action="store_true")

    cmp_ = sub.add_parser("compare", help="aggregate run dirs into a comparison report")
    cmp_.add_argument("run_dirs", nargs="+")
    cmp_.add_argument("--out", default="runs/compare")
    return parser


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def cmd_simulate(args) -> int:
    overrides = {}
    if args.config:
        doc = _load_json(args.config)
        overrides = doc.get("model_params", doc)
    try:
        model = get_model(args.model, overrides)
        times = np.linspace(0.0, model.horizon, args.samples)
        traj = oracle.generate_truth(model, times, seed=args.seed)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{args.model}_trajectory.csv")
    oracle.save_trajectory_csv(csv_path, times, traj)
    if args.plot:
        record = evaluation.RunRecord(model=args.model, method="oracle",
                                      seed=args.seed, history=[], times=times,
                                      truth=traj, pred=traj)
        evaluation.plot_trajectories(record, args.out)
    print(csv_path)
    return EXIT_OK


def _configs_from_args(args) -> list[TrainConfig]:
    doc = _load_json(args.config) if args.config else {}
    if args.model:
        doc["model"] = args.model
    if "model" not in doc:
        raise ConfigError("a model must come from --model or the config file")
    if args.epochs is not None:
        doc["max_epochs"] = args.epochs
    if args.samples is not None:
        doc["train_samples"] = args.samples
    if args.arch:
        doc["arch"] = "pinn-mlp" if args.arch == "pinn" else args.arch
    if args.activation:
        doc["activation"] = args.activation
    if args.constraint:
        doc["constraint"] = args.constraint == "on"
    seeds = args.seed if args.seed else [doc.get("seed", 0)]
    configs = []
    for seed in seeds:
        per_seed = dict(doc)
        per_seed["seed"] = seed
        configs.append(training.config_from_dict(per_seed))
    return configs


def write_run_artifacts(result, out_dir, plot: bool = False) -> dict:
    """Persist one run: config, checkpoints, history CSV, metrics JSON."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    cfg_doc = cfg.to_dict()
    cfg_doc["model_params"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                               for k, v in cfg_doc.get("model_params", {}).items()}
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(cfg_doc, fh, indent=2)
    network.save_checkpoint(os.path.join(out_dir, "checkpoint.json"),
                            result.net, cfg.seed, cfg_doc)
    best = result.net
    saved = {name: t.data.copy() for name, t in best.named_params()}
    for name, t in best.named_params():
        t.data = result.best_params[name]
    network.save_checkpoint(os.path.join(out_dir, "checkpoint_best.json"),
                            best, cfg.seed, cfg_doc)
    for name, t in best.named_params():
        t.data = saved[name]
    evaluation.write_history_csv(os.path.join(out_dir, "history.csv"), result.history)
    metrics = {
        "model": cfg.model,
        "method": cfg.method_label(),
        "seed": cfg.seed,
        "epochs": cfg.max_epochs,
        "diverged": result.diverged,
        "final_nmse": (result.final_nmse if result.history else None),
        "best_nmse": (None if result.best_nmse != result.best_nmse else result.best_nmse),
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2)
    if plot and result.pred_test is not None:
        record = evaluation.RunRecord(
            model=cfg.model, method=cfg.method_label(), seed=cfg.seed,
            history=result.history, times=result.times_test,
            truth=result.truth_test, pred=result.pred_test, epochs=cfg.max_epochs)
        evaluation.plot_trajectories(record, out_dir)
        evaluation.plot_loss_band([record], out_dir)
    return metrics


def cmd_train(args) -> int:
    try:
        configs = _configs_from_args(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    multi = len(configs) > 1
    exit_code = EXIT_OK
    try:
        results = training.train_many(configs)
    except DivergenceError as err:
        results = [err.partial] if err.partial is not None else []
        exit_code = EXIT_NUMERIC
        print(f"error: {err}", file=sys.stderr)
    for result in results:
        out_dir = (os.path.join(args.out, f"seed{result.config.seed}")
                   if multi else args.out)
        metrics = write_run_artifacts(result, out_dir, plot=args.plot)
        print(json.dumps(metrics))
        if result.diverged:
            exit_code = EXIT_NUMERIC
    return exit_code


def cmd_compare(args) -> int:
    groups: dict[tuple[str, str], list[dict]] = {}
    for run_dir in args.run_dirs:
        metrics_path = os.path.join(run_dir, "metrics.json")
        history_path = os.path.join(run_dir, "history.csv")
        if not os.path.exists(metrics_path):
            print(f"error: missing metrics file: {metrics_path}", file=sys.stderr)
            return EXIT_USAGE
        doc = _load_json(metrics_path)
        doc["history"] = (evaluation.read_history_csv(history_path)
                          if os.path.exists(history_path) else [])
        groups.setdefault((doc["model"], doc["method"]), []).append(doc)

    os.makedirs(args.out, exist_ok=True)
    reports = []
    for (model, method), runs in sorted(groups.items()):
        series = [[row["test_nmse"] for row in run["history"]] for run in runs]
        seeds = [run["seed"] for run in runs]
        if len(runs) >= 2:
            reports.append(evaluation.aggregate_seeds(
                series, model=model, method=method, seeds=seeds,
                epochs=runs[0]["epochs"]))
        else:
            only = evaluation.final_nmse(series[0])
            reports.append(evaluation.EvalReport(
                model=model, method=method, seeds=seeds, per_seed=[only],
                mean=only, std=None, epochs=runs[0]["epochs"]))

    doc = {"methods": [evaluation.report_to_dict(r) for r in reports]}
    models = sorted({r.model for r in reports})
    methods = sorted({r.method for r in reports})
    if models and all(any(r.model == m and r.method == meth for r in reports)
                      for m in models for meth in methods):
        table = {meth: {m: next(r.mean for r in reports
                                if r.model == m and r.method == meth)
                        for m in models} for meth in methods}
        doc["rank_scores"] = evaluation.rank_score(table)
    with open(os.path.join(args.out, "comparison.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
    evaluation.plot_method_bars(reports, os.path.join(args.out, "comparison.svg"))
    print(os.path.join(args.out, "comparison.json"))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "train":
        return cmd_train(args)
    return cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
