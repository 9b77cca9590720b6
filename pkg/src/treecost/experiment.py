"""Cross-workload training protocol, sweeps, and result reporting.

The protocol holds out whole workloads: a fixed set of workload ids forms
the training pool, everything else is the test set. The pool is shuffled
once, a validation slice is cut off, and the remaining graphs are
subsampled to a fraction to measure how accuracy scales with sample cost.
Each (model, fraction, seed) cell trains independently; reports average
over seeds and attach the standard error of the mean.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .curves import DEFAULT_SAMPLES, extract_curves
from .graphs import Dataset
from .models import LABELS, ModelSpec, Surrogate, build_surrogate

TRAIN_WORKLOADS = ("C1", "C2", "C4", "C8", "C9", "C12")
FRACTIONS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.5, 0.75, 1.0)
DEFAULT_SEEDS = (0, 1, 2)


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite."""


class SweepError(RuntimeError):
    """Raised when a sweep cell fails; names the cell."""


@dataclass(frozen=True)
class SplitPlan:
    train_workloads: tuple[str, ...] = TRAIN_WORKLOADS
    validation_fraction: float = 0.2
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if not self.train_workloads:
            raise ValueError("train_workloads must not be empty")


@dataclass
class Split:
    """Index triple into ``dataset.graphs``; how it was made is up to the caller."""

    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    fraction: float = 1.0

    def __post_init__(self):
        self.train_indices = np.asarray(self.train_indices, dtype=np.int64)
        self.val_indices = np.asarray(self.val_indices, dtype=np.int64)
        self.test_indices = np.asarray(self.test_indices, dtype=np.int64)
        if self.train_indices.size == 0:
            raise ValueError("empty training split")


def make_split(dataset: Dataset, plan: SplitPlan) -> Split:
    """Workload-holdout split: test graphs come from workloads the model
    never trains on. Validation is cut from the shuffled pool before the
    training fraction is applied, so every fraction shares one val set."""
    present = set(dataset.workload_ids())
    missing = [w for w in plan.train_workloads if w not in present]
    if missing:
        raise ValueError(f"train workloads not in dataset: {missing}")
    pool = dataset.indices_for(plan.train_workloads)
    test = np.array([i for i in range(len(dataset))
                     if dataset.graphs[i][0] not in plan.train_workloads], dtype=np.int64)
    if test.size == 0:
        raise ValueError("no held-out workloads left for testing")
    perm = np.random.default_rng(plan.seed).permutation(pool)
    n_val = int(math.floor(plan.validation_fraction * perm.size))
    val = perm[:n_val]
    train_full = perm[n_val:]
    n_train = int(math.ceil(plan.fraction * train_full.size))
    if n_train == 0:
        raise ValueError("training fraction selects no graphs")
    return Split(train_full[:n_train], val, test, fraction=plan.fraction)


@dataclass
class RunResult:
    """Everything one training cell produces besides the weights.

    Losses are mean absolute error in the space the model was trained in
    (log space when ``log_space``); per-graph test targets and predictions
    are always stored in runtime space.
    """

    label: str
    fraction: float
    seed: int
    train_loss: float
    val_loss: float
    test_loss: float
    epochs_run: int
    best_epoch: int
    final_lr: float
    train_size: int
    val_size: int
    test_size: int
    log_space: bool = False
    val_history: list[float] = field(default_factory=list)
    test_targets: list[float] = field(default_factory=list)
    test_predictions: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def save_result(result: RunResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")


def load_result(path) -> RunResult:
    with open(path, encoding="utf-8") as fh:
        return RunResult.from_dict(json.load(fh))


def _batches(indices: np.ndarray, size: int):
    for start in range(0, indices.size, size):
        yield indices[start:start + size]


def predict_many(model: Surrogate, graphs, curve_samples: int = DEFAULT_SAMPLES,
                 chunk: int = 256) -> np.ndarray:
    """Model outputs for a list of graphs, evaluated in bounded chunks."""
    out = np.empty(len(graphs), dtype=np.float64)
    for start in range(0, len(graphs), chunk):
        part = graphs[start:start + chunk]
        if model.spec.is_curve:
            mat = np.stack([extract_curves(g, curve_samples) for g in part])
            pred = model.forward_curves(mat)
        else:
            pred = model.forward_graphs(list(part))
        out[start:start + chunk] = pred.data
    return out


def train_model(dataset: Dataset, spec: ModelSpec, split: Split,
                config: nn.OptimizerConfig | None = None, seed: int = 0,
                curve_samples: int = DEFAULT_SAMPLES,
                log_targets: bool = False) -> tuple[Surrogate, RunResult]:
    """Train one surrogate on one split with the standard recipe.

    Huber loss on minibatches, Adam, patience-based lr decay driven by the
    monitored loss (validation if a validation split exists, else the epoch
    training loss), early stopping, best-epoch weight restore. Reported
    losses are mean absolute error.
    """
    config = config or nn.OptimizerConfig()
    curve_width = 2 * curve_samples if spec.is_curve else None
    model = build_surrogate(spec, dataset.feature_dim, dataset.type_vocab_size,
                            seed=seed, curve_width=curve_width)
    graphs = [g for _, g in dataset.graphs]
    runtimes = dataset.runtimes()
    y = np.log(runtimes) if log_targets else runtimes

    curve_cache: dict[int, np.ndarray] = {}
    if spec.is_curve:
        needed = np.concatenate([split.train_indices, split.val_indices, split.test_indices])
        for i in np.unique(needed):
            curve_cache[int(i)] = extract_curves(graphs[i], curve_samples)

    def forward(indices: np.ndarray) -> nn.Tensor:
        if spec.is_curve:
            return model.forward_curves(np.stack([curve_cache[int(i)] for i in indices]))
        return model.forward_graphs([graphs[i] for i in indices])

    def eval_l1(indices: np.ndarray) -> float:
        if indices.size == 0:
            return float("nan")
        total = 0.0
        for batch in _batches(indices, 256):
            total += float(np.abs(forward(batch).data - y[batch]).sum())
        return total / indices.size

    def monitored(train_epoch_loss: float) -> float:
        if split.val_indices.size == 0:
            return train_epoch_loss
        total = 0.0
        for batch in _batches(split.val_indices, 256):
            pred = forward(batch)
            total += float(nn.huber_loss(pred, y[batch]).data) * batch.size
        return total / split.val_indices.size

    rng = np.random.default_rng([seed, 1])
    scheduler = nn.PatienceDecay(config)
    history: list[float] = []
    best_monitor = float("inf")
    best_epoch = 0
    best_weights = model.snapshot()
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        perm = rng.permutation(split.train_indices)
        epoch_loss = 0.0
        for batch in _batches(perm, config.batch_size):
            nn.zero_grad(model.parameters)
            loss = nn.huber_loss(forward(batch), y[batch])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"{spec.label}: non-finite training loss at epoch {epoch}")
            nn.backward(loss)
            nn.adam_step(model.parameters, config, scheduler.lr)
            epoch_loss += value * batch.size
        epoch_loss /= split.train_indices.size

        monitor = monitored(epoch_loss)
        if not np.isfinite(monitor):
            raise TrainingDiverged(
                f"{spec.label}: non-finite monitored loss at epoch {epoch}")
        if monitor < best_monitor:
            best_monitor = monitor
            best_epoch = epoch
            best_weights = model.snapshot()
        scheduler.step(monitor)
        history.append(monitor)
        if nn.early_stop(history, config.early_stop_patience):
            break

    model.restore(best_weights)

    test_pred = predict_many(model, [graphs[i] for i in split.test_indices],
                             curve_samples=curve_samples) if split.test_indices.size else np.empty(0)
    test_targets = runtimes[split.test_indices]
    test_loss = float(np.abs(test_pred - y[split.test_indices]).mean()) \
        if split.test_indices.size else float("nan")
    result = RunResult(
        label=spec.label,
        fraction=split.fraction,
        seed=seed,
        train_loss=eval_l1(split.train_indices),
        val_loss=eval_l1(split.val_indices),
        test_loss=test_loss,
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        final_lr=scheduler.lr,
        train_size=int(split.train_indices.size),
        val_size=int(split.val_indices.size),
        test_size=int(split.test_indices.size),
        log_space=log_targets,
        val_history=[float(v) for v in history],
        test_targets=[float(t) for t in test_targets],
        test_predictions=[float(np.exp(p)) if log_targets else float(p) for p in test_pred],
    )
    return model, result


def _cell_seed(seed: int, label: str, fraction: float) -> int:
    entropy = [seed, LABELS.index(label), round(fraction * 1000)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _run_cell(args):
    dataset, label, fraction, seed, plan_kwargs, config, curve_samples, log_targets = args
    plan = SplitPlan(fraction=fraction, seed=seed, **plan_kwargs)
    split = make_split(dataset, plan)
    spec = ModelSpec.from_label(label)
    _, result = train_model(dataset, spec, split, config=config,
                            seed=_cell_seed(seed, label, fraction),
                            curve_samples=curve_samples, log_targets=log_targets)
    result.seed = seed
    return result


def sweep(dataset: Dataset, labels=LABELS, fractions=FRACTIONS, seeds=DEFAULT_SEEDS,
          train_workloads=TRAIN_WORKLOADS, validation_fraction: float = 0.2,
          config: nn.OptimizerConfig | None = None, curve_samples: int = DEFAULT_SAMPLES,
          log_targets: bool = False, jobs: int = 1) -> list[RunResult]:
    """Train every (model, fraction, seed) cell; order of the returned list
    is canonical (label, then fraction, then seed) regardless of ``jobs``."""
    plan_kwargs = {"train_workloads": tuple(train_workloads),
                   "validation_fraction": validation_fraction}
    cells = [(dataset, label, float(fraction), int(seed), plan_kwargs,
              config, curve_samples, log_targets)
             for label in labels for fraction in fractions for seed in seeds]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, cell) for cell in cells]
            for cell, future in zip(cells, futures):
                try:
                    results.append(future.result())
                except Exception as exc:
                    raise SweepError(
                        f"cell model={cell[1]} fraction={cell[2]:g} seed={cell[3]} "
                        f"failed: {exc}") from exc
    else:
        for cell in cells:
            try:
                results.append(_run_cell(cell))
            except Exception as exc:
                raise SweepError(
                    f"cell model={cell[1]} fraction={cell[2]:g} seed={cell[3]} "
                    f"failed: {exc}") from exc
    results.sort(key=lambda r: (LABELS.index(r.label), r.fraction, r.seed))
    return results


# -- reporting ------------------------------------------------------------

def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def _fmt_cell(values: list[float]) -> str:
    mean, se = _mean_se(values)
    return f"{mean:.6g} ± {se:.6g}"


def summarize(results: list[RunResult]) -> list[dict]:
    """One row per (fraction, model): losses over seeds as "mean ± se"."""
    groups: dict[tuple[float, str], dict[str, list[float]]] = {}
    for r in results:
        cell = groups.setdefault((r.fraction, r.label), {"train": [], "test": []})
        cell["train"].append(r.train_loss)
        cell["test"].append(r.test_loss)
    rows = []
    for (fraction, label) in sorted(groups, key=lambda k: (k[0], LABELS.index(k[1]))):
        cell = groups[(fraction, label)]
        rows.append({
            "subset": f"{fraction:g}",
            "model": label,
            "train_loss": _fmt_cell(cell["train"]),
            "test_loss": _fmt_cell(cell["test"]),
        })
    return rows


def _aligned_table(rows: list[dict]) -> str:
    columns = ["subset", "model", "train_loss", "test_loss"]
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"


def report(results: list[RunResult], out_dir, hist_bins: int = 50) -> list[dict]:
    """Write summary.csv / summary.txt, per-cell scatter files, and a test
    target histogram under ``out_dir``; returns the summary rows."""
    if not results:
        raise ValueError("report: no results")
    os.makedirs(out_dir, exist_ok=True)
    rows = summarize(results)

    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("subset,model,train_loss,test_loss\n")
        for r in rows:
            fh.write(f"{r['subset']},{r['model']},{r['train_loss']},{r['test_loss']}\n")
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(_aligned_table(rows))

    for r in results:
        name = f"scatter_{r.label}_{r.fraction:g}_{r.seed}.csv"
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write("target,error\n")
            for t, p in zip(r.test_targets, r.test_predictions):
                fh.write(f"{t!r},{p - t!r}\n")

    targets = np.asarray(results[0].test_targets, dtype=np.float64)
    counts, edges = np.histogram(targets, bins=hist_bins) if targets.size else \
        (np.zeros(hist_bins, dtype=np.int64), np.linspace(0.0, 1.0, hist_bins + 1))
    with open(os.path.join(out_dir, "target_hist.csv"), "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(c)}\n")
    return rows
