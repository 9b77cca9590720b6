"""Acceptance gate.

Seven checks, run in order, each printing one verdict line (visible with
``pytest -s`` or in captured output). The last one needs a real dataset and
is skipped unless TREECOST_REAL_DATA points at a dataset directory.
"""

import os
import time

import numpy as np
import pytest

from treecost import nn
from treecost.curves import extract_curves
from treecost.experiment import (SplitPlan, make_split, predict_many, sweep,
                                 summarize, train_model)
from treecost.graphs import AstGraph, Dataset, RESNET18_CONV_WORKLOADS
from treecost.models import (LABELS, ModelSpec, aggregate, build_surrogate,
                             predict)
from treecost.nn import OptimizerConfig, PatienceDecay, early_stop
from treecost.synth import (FEATURE_DIM, SynthConfig, TYPE_VOCAB_SIZE,
                            generate, make_rewired_pairs)

PAIR_SPECS = ((4, 2), (4, 2), (4, 2))


def verdict(tag, ok, detail):
    print(f"{tag}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{tag}: {detail}"


def permute(graph: AstGraph, rng) -> AstGraph:
    """The same tree under a random node numbering."""
    perm = rng.permutation(graph.node_count)
    features = np.empty_like(graph.features)
    features[perm] = graph.features
    types = np.empty_like(graph.node_types)
    types[perm] = graph.node_types
    edges = perm[graph.edges] if graph.edges.size else graph.edges
    return AstGraph(node_count=graph.node_count, edges=edges, features=features,
                    node_types=types, runtime=graph.runtime,
                    root_index=int(perm[graph.root_index]))


@pytest.fixture(scope="module")
def probe_graphs():
    # graphs with at least one loop, so no curve vector is identically zero
    # (a zero input parks relu pre-activations exactly on the kink)
    ds = generate(SynthConfig(seed=5, graphs_per_workload=4))
    graphs = [g for _, g in ds.graphs if extract_curves(g, 4).any()]
    assert len(graphs) >= 10
    return graphs[:10]


def fd_probe(loss_of, flat, idx, h):
    saved = flat[idx]
    flat[idx] = saved + h
    up = float(loss_of().data)
    flat[idx] = saved - h
    down = float(loss_of().data)
    flat[idx] = saved
    return (up - down) / (2 * h)


def test_a1_gradients(probe_graphs):
    """Analytic gradients match central finite differences for all 7 models."""
    started = time.time()
    h = 1e-5
    worst = 0.0
    checked = skipped = 0
    y = np.log([g.runtime for g in probe_graphs])
    coord_rng = np.random.default_rng(17)
    for label in LABELS:
        spec = ModelSpec.from_label(label)
        curve_width = 16 if spec.is_curve else None
        model = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=11,
                                curve_width=curve_width)
        if spec.is_curve:
            batch = np.stack([extract_curves(g, 8) for g in probe_graphs])
            loss_of = lambda: nn.huber_loss(model.forward_curves(batch), y)
        else:
            loss_of = lambda: nn.huber_loss(model.forward_graphs(probe_graphs), y)
        nn.zero_grad(model.parameters)
        nn.backward(loss_of())
        for p in model.parameters:
            analytic = p.grad.reshape(-1)
            flat = p.data.reshape(-1)
            valid = 0
            for idx in coord_rng.permutation(flat.size):
                fd = fd_probe(loss_of, flat, idx, h)
                half = fd_probe(loss_of, flat, idx, h / 2)
                if abs(fd - half) > 1e-5 * max(abs(fd), abs(half)) + 2e-9:
                    # the loss is piecewise quadratic in any one parameter, so
                    # step sizes only disagree when the window crosses a relu
                    # boundary; the quotient is no derivative estimate there
                    skipped += 1
                    continue
                a = analytic[idx]
                worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
                checked += 1
                valid += 1
                if valid == min(4, flat.size):
                    break
            assert valid > 0, f"{label}: no usable probe coordinate"
    elapsed = time.time() - started
    verdict("A1 gradient suite", worst < 1e-4 and elapsed < 60,
            f"max rel err {worst:.3g} over {checked} coordinates "
            f"({skipped} on kinks), {elapsed:.1f}s")


def test_a2_invariances(probe_graphs):
    """Node numbering and node order never change a prediction."""
    rng = np.random.default_rng(3)
    worst = 0.0
    for label in LABELS:
        spec = ModelSpec.from_label(label)
        model = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=4,
                                curve_width=2 * 6 if spec.is_curve else None)
        for graph in probe_graphs[:5]:
            other = permute(graph, rng)
            if spec.is_curve:
                a = predict(model, extract_curves(graph, 6))
                b = predict(model, extract_curves(other, 6))
            else:
                a, b = predict(model, graph), predict(model, other)
            worst = max(worst, abs(a - b))
    permutation_ok = worst < 1e-12

    # extractor alone, under the same permutations
    extractor_gap = max(
        np.abs(extract_curves(g, 10) - extract_curves(permute(g, rng), 10)).max()
        for g in probe_graphs)

    # mean aggregation cannot see row order
    states = rng.standard_normal((30, 8))
    shuffled = states[rng.permutation(30)]
    agg_gap = np.abs(aggregate(nn.Tensor(states)).data
                     - aggregate(nn.Tensor(shuffled)).data).max()

    # models that ignore edges give byte-identical outputs on rewired pairs
    pairs = make_rewired_pairs(SynthConfig(seed=3, graphs_per_workload=4,
                                           workload_specs=PAIR_SPECS))
    members = [g for _, g in pairs.graphs]
    mlp_exact = True
    for label in ("MLP1", "MLP2", "MLP3"):
        model = build_surrogate(ModelSpec.from_label(label), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=4)
        for nested, flat in zip(members[0::2], members[1::2]):
            mlp_exact &= predict(model, nested) == predict(model, flat)

    verdict("A2 invariance suite",
            permutation_ok and extractor_gap < 1e-12 and agg_gap < 1e-12 and mlp_exact,
            f"permutation gap {worst:.3g}, extractor gap {extractor_gap:.3g}, "
            f"aggregation gap {agg_gap:.3g}, MLP rewired equality {mlp_exact}")


def test_a3_overfit():
    """MLP1 and GCN1 both drive train error under 5% of the mean target."""
    started = time.time()
    ds = generate(SynthConfig(seed=0, graphs_per_workload=8, noise_std=0.0))
    split = make_split(ds, SplitPlan(train_workloads=("S1", "S2", "S3", "S4"),
                                     validation_fraction=0.0, seed=0))
    assert split.train_indices.size == 32
    targets = ds.runtimes()[split.train_indices]
    bound = 0.05 * targets.mean()
    graphs = [ds.graphs[i][1] for i in split.train_indices]
    losses = {}
    for label in ("MLP1", "GCN1"):
        model, result = train_model(ds, ModelSpec.from_label(label), split,
                                    config=OptimizerConfig(max_epochs=500),
                                    seed=0, log_targets=True)
        assert result.epochs_run <= 500
        preds = np.exp(predict_many(model, graphs))
        losses[label] = np.abs(preds - targets).mean()
    elapsed = time.time() - started
    verdict("A3 overfit check",
            all(v < bound for v in losses.values()) and elapsed < 120,
            f"train l1 MLP1 {losses['MLP1']:.3g}, GCN1 {losses['GCN1']:.3g}, "
            f"bound {bound:.3g}, {elapsed:.1f}s")


def test_a4_structure_sensitivity():
    """Message passing separates rewired pairs that defeat bag-of-nodes models."""
    started = time.time()
    pairs = make_rewired_pairs(SynthConfig(seed=0, graphs_per_workload=50,
                                           noise_std=0.0, workload_specs=PAIR_SPECS))
    split = make_split(pairs, SplitPlan(train_workloads=("P1", "P2"),
                                        validation_fraction=0.0, seed=0))
    assert split.train_indices.size == 200 and split.test_indices.size == 100

    y = np.log(pairs.runtimes())
    test_idx = split.test_indices
    lower_bound = np.abs(y[test_idx[0::2]] - y[test_idx[1::2]]).mean() / 2

    means = {}
    for label in ("MLP1", "GCN1"):
        losses = [train_model(pairs, ModelSpec.from_label(label), split,
                              config=OptimizerConfig(), seed=seed,
                              log_targets=True)[1].test_loss
                  for seed in (0, 1, 2)]
        means[label] = float(np.mean(losses))
    elapsed = time.time() - started
    ratio_ok = means["GCN1"] < 0.5 * means["MLP1"]
    bound_ok = means["MLP1"] >= lower_bound - 1e-9
    verdict("A4 structure sensitivity",
            ratio_ok and bound_ok and elapsed < 300,
            f"GCN1 {means['GCN1']:.3g} vs MLP1 {means['MLP1']:.3g} "
            f"(needs < {0.5 * means['MLP1']:.3g}), MLP1 lower bound "
            f"{lower_bound:.3g} holds: {bound_ok}, {elapsed:.1f}s")


def test_a5_training_recipe():
    """Scheduler and stopping rules behave exactly as specified."""
    config = OptimizerConfig()

    sched = PatienceDecay(config)
    lrs = [sched.step(1.0) for _ in range(7)]
    decay_ok = lrs[:6] == [1e-3] * 6 and lrs[6] == pytest.approx(9e-4)

    for _ in range(500):
        sched.step(1.0)
    clamp_ok = sched.lr == 1e-6

    history = [5.0, 4.0, 3.0] + [3.5] * 30
    stops = [early_stop(history[:n]) for n in range(1, len(history) + 1)]
    stop_at = stops.index(True) + 1
    early_ok = stop_at == 23 and not any(stops[:22])  # best at epoch 3, +20

    hard_ok = config.max_epochs == 200

    # a real noisy run stops exactly at best + patience
    ds = generate(SynthConfig(seed=1, graphs_per_workload=10, noise_std=0.4))
    split = make_split(ds, SplitPlan(train_workloads=("S1", "S2", "S3"),
                                     validation_fraction=0.4, seed=0))
    _, result = train_model(ds, ModelSpec.from_label("MLP1"), split,
                            config=OptimizerConfig(max_epochs=150), seed=0,
                            log_targets=True)
    trace_ok = (result.epochs_run < 150
                and result.epochs_run == result.best_epoch + 20)

    verdict("A5 recipe conformance",
            decay_ok and clamp_ok and early_ok and hard_ok and trace_ok,
            f"decay at epoch 7 {decay_ok}, clamp ==1e-6 {clamp_ok}, "
            f"stop at best+20 {early_ok} (trace run: {result.epochs_run} == "
            f"{result.best_epoch}+20 {trace_ok}), max epochs 200 {hard_ok}")


def test_a6_protocol_counts():
    """Split sizes match the published workload table; a full sweep has 168 cells."""
    edges = np.array([[0, 1]], dtype=np.int64)

    def stub(workloads, per):
        graphs = []
        for w in workloads:
            count = per if per else w.config_count
            for k in range(count):
                features = np.zeros((2, FEATURE_DIM))
                features[1, 0] = 2.0 + k % 5  # loop extent
                features[1, 5] = 1.0
                graphs.append((w.id, AstGraph(
                    node_count=2, edges=edges, features=features,
                    node_types=np.array([0, 1]), runtime=1.0 + k % 3)))
        metas = [type(w)(w.id, w.H, w.W, w.c_in, w.c_out, w.kernel, w.stride,
                         w.padding, w.dilation, per if per else w.config_count)
                 for w in workloads]
        return Dataset(workloads=metas, graphs=graphs, feature_dim=FEATURE_DIM,
                       type_vocab_size=TYPE_VOCAB_SIZE)

    full = stub(RESNET18_CONV_WORKLOADS, per=0)
    split = make_split(full, SplitPlan())
    counts_ok = (split.test_indices.size == 3520
                 and split.train_indices.size + split.val_indices.size == 3332)

    tiny = stub(RESNET18_CONV_WORKLOADS, per=6)
    results = sweep(tiny, config=OptimizerConfig(max_epochs=1), curve_samples=2)
    rows = summarize(results)
    shape_ok = (len(results) == 7 * 8 * 3
                and len(rows) == 7 * 8
                and all(set(r) == {"subset", "model", "train_loss", "test_loss"}
                        for r in rows)
                and all("±" in r["test_loss"] for r in rows))

    verdict("A6 protocol counts", counts_ok and shape_ok,
            f"test 3520 / pool 3332 {counts_ok}, 168 results with "
            f"{len(rows)}-row summary {shape_ok}")


def test_a7_real_data_trend():
    """Optional: more training data helps GCN1 on the released measurements."""
    data_dir = os.environ.get("TREECOST_REAL_DATA")
    if not data_dir:
        print("A7 real-data trend: SKIP (set TREECOST_REAL_DATA to a dataset "
              "directory to run)", flush=True)
        pytest.skip("TREECOST_REAL_DATA not set")
    from treecost.graphs import load_dataset
    ds = load_dataset(data_dir)
    results = sweep(ds, labels=("GCN1",), fractions=(0.05, 0.25, 1.0),
                    seeds=(0, 1, 2), log_targets=True)
    by_fraction = {}
    for r in results:
        by_fraction.setdefault(r.fraction, []).append(r.test_loss)
    means = {f: float(np.mean(v)) for f, v in by_fraction.items()}
    trend_ok = means[0.05] > means[1.0]
    verdict("A7 real-data trend", trend_ok,
            f"GCN1 test l1 by fraction {means}")
