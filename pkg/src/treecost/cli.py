"""Command-line interface.

Every subcommand resolves its configuration in three layers (built-in
defaults, then a JSON config file given with --config, then explicit
flags), echoes the resolved configuration as its first output line, and
uses exit codes 0 (ok), 1 (usage), 2 (bad data or configuration), and
3 (training divergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiment, synth
from .curves import DEFAULT_SAMPLES, extract_curves
from .graphs import DatasetError, GraphValidationError, load_dataset, save_dataset
from .models import LABELS, ModelSpec, load_checkpoint, save_checkpoint
from .nn import OptimizerConfig

DEFAULTS = {
    "synth": {"out": None, "seed": 0, "graphs": 40, "noise_std": 0.0},
    "featurize": {"data": None, "out": None, "samples": DEFAULT_SAMPLES},
    "train": {
        "data": None, "out": None, "model": "GCN1", "fraction": 1.0, "seed": 0,
        "train_workloads": list(experiment.TRAIN_WORKLOADS), "validation_fraction": 0.2,
        "log_targets": False, "max_epochs": 200, "batch_size": 32,
        "learning_rate": 1e-3, "curve_samples": DEFAULT_SAMPLES,
    },
    "sweep": {
        "data": None, "out": None, "models": list(LABELS),
        "fractions": list(experiment.FRACTIONS), "seeds": list(experiment.DEFAULT_SEEDS),
        "train_workloads": list(experiment.TRAIN_WORKLOADS), "validation_fraction": 0.2,
        "log_targets": False, "max_epochs": 200, "batch_size": 32,
        "learning_rate": 1e-3, "curve_samples": DEFAULT_SAMPLES, "jobs": 1,
    },
    "evaluate": {"data": None, "checkpoint": None, "curve_samples": DEFAULT_SAMPLES,
                 "log_space": False},
    "predict": {"data": None, "checkpoint": None, "out": None,
                "curve_samples": DEFAULT_SAMPLES, "log_space": False},
    "report": {"results": None, "out": None, "hist_bins": 50},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add(sub, name, help_text):
    p = sub.add_parser(name, help=help_text, argument_default=None)
    p.add_argument("--config", help="JSON file with option overrides")
    return p


def build_parser() -> _Parser:
    parser = _Parser(prog="treecost", description="Runtime prediction for tensor-program trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _add(sub, "synth", "generate a synthetic dataset with known runtimes")
    p.add_argument("--out", help="output dataset directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--graphs", type=int, help="graphs per workload")
    p.add_argument("--noise-std", type=float, dest="noise_std")

    p = _add(sub, "featurize", "write per-graph curve features as CSV")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--samples", type=int)

    p = _add(sub, "train", "train one model on one split")
    p.add_argument("--data")
    p.add_argument("--out", help="directory for the result JSON and checkpoint")
    p.add_argument("--model", choices=LABELS)
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-workloads", dest="train_workloads",
                   help="comma-separated workload ids")
    p.add_argument("--validation-fraction", type=float, dest="validation_fraction")
    p.add_argument("--log-targets", action=argparse.BooleanOptionalAction, dest="log_targets")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--curve-samples", type=int, dest="curve_samples")

    p = _add(sub, "sweep", "train every (model, fraction, seed) cell and summarize")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--models", help="comma-separated model labels")
    p.add_argument("--fractions", help="comma-separated training fractions")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--train-workloads", dest="train_workloads")
    p.add_argument("--validation-fraction", type=float, dest="validation_fraction")
    p.add_argument("--log-targets", action=argparse.BooleanOptionalAction, dest="log_targets")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--curve-samples", type=int, dest="curve_samples")
    p.add_argument("--jobs", type=int)

    p = _add(sub, "evaluate", "mean absolute error of a checkpoint on a dataset")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--curve-samples", type=int, dest="curve_samples")
    p.add_argument("--log-space", action=argparse.BooleanOptionalAction, dest="log_space")

    p = _add(sub, "predict", "write per-graph predictions as CSV")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--curve-samples", type=int, dest="curve_samples")
    p.add_argument("--log-space", action=argparse.BooleanOptionalAction, dest="log_space")

    p = _add(sub, "report", "summarize a directory of result JSON files")
    p.add_argument("--results", help="directory of result JSON files")
    p.add_argument("--out")
    p.add_argument("--hist-bins", type=int, dest="hist_bins")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    defaults = DEFAULTS[args.command]
    resolved = dict(defaults)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        resolved.update(overrides)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _as_list(value, convert):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    return [convert(v) for v in value]


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(f"--{k.replace('_', '-')}" for k in missing))


def _echo(cfg: dict) -> None:
    print("config: " + json.dumps(cfg, sort_keys=True))


def _optimizer(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(learning_rate=float(cfg["learning_rate"]),
                           max_epochs=int(cfg["max_epochs"]),
                           batch_size=int(cfg["batch_size"]))


def _cmd_synth(cfg: dict) -> int:
    _require(cfg, "out")
    _echo(cfg)
    config = synth.SynthConfig(seed=int(cfg["seed"]), graphs_per_workload=int(cfg["graphs"]),
                               noise_std=float(cfg["noise_std"]))
    dataset = synth.generate(config)
    save_dataset(dataset, cfg["out"])
    print(f"wrote {len(dataset)} graphs in {len(dataset.workloads)} workloads to {cfg['out']}")
    return 0


def _cmd_featurize(cfg: dict) -> int:
    _require(cfg, "data", "out")
    _echo(cfg)
    dataset = load_dataset(cfg["data"])
    samples = int(cfg["samples"])
    with open(cfg["out"], "w", encoding="utf-8") as fh:
        names = ",".join(f"c{i}" for i in range(2 * samples))
        fh.write(f"workload_id,runtime,{names}\n")
        for wid, graph in dataset.graphs:
            curve = extract_curves(graph, samples)
            fh.write(f"{wid},{graph.runtime!r}," + ",".join(repr(float(v)) for v in curve) + "\n")
    print(f"wrote {len(dataset)} rows to {cfg['out']}")
    return 0


def _cmd_train(cfg: dict) -> int:
    _require(cfg, "data", "out")
    _echo(cfg)
    dataset = load_dataset(cfg["data"])
    spec = ModelSpec.from_label(cfg["model"])
    plan = experiment.SplitPlan(
        train_workloads=tuple(_as_list(cfg["train_workloads"], str)),
        validation_fraction=float(cfg["validation_fraction"]),
        fraction=float(cfg["fraction"]), seed=int(cfg["seed"]))
    split = experiment.make_split(dataset, plan)
    model, result = experiment.train_model(
        dataset, spec, split, config=_optimizer(cfg), seed=int(cfg["seed"]),
        curve_samples=int(cfg["curve_samples"]), log_targets=bool(cfg["log_targets"]))
    os.makedirs(cfg["out"], exist_ok=True)
    stem = f"{result.label}_{result.fraction:g}_{result.seed}"
    experiment.save_result(result, os.path.join(cfg["out"], stem + ".json"))
    save_checkpoint(model, os.path.join(cfg["out"], stem + ".ckpt"),
                    seed=result.seed, epoch=result.epochs_run)
    print(f"trained {result.label} for {result.epochs_run} epochs "
          f"(best {result.best_epoch}): train l1 {result.train_loss:.6g}, "
          f"test l1 {result.test_loss:.6g}")
    return 0


def _cmd_sweep(cfg: dict) -> int:
    _require(cfg, "data", "out")
    _echo(cfg)
    dataset = load_dataset(cfg["data"])
    results = experiment.sweep(
        dataset,
        labels=tuple(_as_list(cfg["models"], str)),
        fractions=tuple(_as_list(cfg["fractions"], float)),
        seeds=tuple(_as_list(cfg["seeds"], int)),
        train_workloads=tuple(_as_list(cfg["train_workloads"], str)),
        validation_fraction=float(cfg["validation_fraction"]),
        config=_optimizer(cfg), curve_samples=int(cfg["curve_samples"]),
        log_targets=bool(cfg["log_targets"]), jobs=int(cfg["jobs"]))
    os.makedirs(cfg["out"], exist_ok=True)
    for r in results:
        experiment.save_result(
            r, os.path.join(cfg["out"], f"{r.label}_{r.fraction:g}_{r.seed}.json"))
    experiment.report(results, cfg["out"])
    print(f"wrote {len(results)} results and summary to {cfg['out']}")
    return 0


def _load_model(cfg: dict):
    dataset = load_dataset(cfg["data"])
    model, header = load_checkpoint(cfg["checkpoint"])
    if model.feature_dim != dataset.feature_dim:
        raise DatasetError(
            f"checkpoint expects feature_dim {model.feature_dim}, "
            f"dataset has {dataset.feature_dim}")
    return dataset, model


def _predictions(dataset, model, cfg: dict) -> np.ndarray:
    graphs = [g for _, g in dataset.graphs]
    preds = experiment.predict_many(model, graphs, curve_samples=int(cfg["curve_samples"]))
    return np.exp(preds) if cfg["log_space"] else preds


def _cmd_evaluate(cfg: dict) -> int:
    _require(cfg, "data", "checkpoint")
    _echo(cfg)
    dataset, model = _load_model(cfg)
    preds = _predictions(dataset, model, cfg)
    targets = dataset.runtimes()
    print(f"l1 {np.abs(preds - targets).mean():.6g} over {len(dataset)} graphs")
    for wid in dict.fromkeys(dataset.workload_ids()):
        idx = dataset.indices_for([wid])
        print(f"l1[{wid}] {np.abs(preds[idx] - targets[idx]).mean():.6g}")
    return 0


def _cmd_predict(cfg: dict) -> int:
    _require(cfg, "data", "checkpoint", "out")
    _echo(cfg)
    dataset, model = _load_model(cfg)
    preds = _predictions(dataset, model, cfg)
    with open(cfg["out"], "w", encoding="utf-8") as fh:
        fh.write("workload_id,target,prediction\n")
        for (wid, graph), p in zip(dataset.graphs, preds):
            fh.write(f"{wid},{graph.runtime!r},{float(p)!r}\n")
    print(f"wrote {len(dataset)} predictions to {cfg['out']}")
    return 0


def _cmd_report(cfg: dict) -> int:
    _require(cfg, "results", "out")
    _echo(cfg)
    names = sorted(n for n in os.listdir(cfg["results"]) if n.endswith(".json"))
    results = []
    for name in names:
        path = os.path.join(cfg["results"], name)
        try:
            results.append(experiment.load_result(path))
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{path}: not a result file ({exc})") from exc
    if not results:
        raise DatasetError(f"no result JSON files in {cfg['results']}")
    experiment.report(results, cfg["out"], hist_bins=int(cfg["hist_bins"]))
    print(f"summarized {len(results)} results into {cfg['out']}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "report": _cmd_report,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except experiment.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, GraphValidationError, experiment.SweepError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    entry()
