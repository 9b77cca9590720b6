"""Compare the compiled kernel backend against the numpy fallback.

Run after installing the package:

    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from treecost.kernels import available_backends
from treecost.models import ModelSpec, build_surrogate
from treecost.nn import backward, huber_loss, zero_grad
from treecost.synth import SynthConfig, generate


def best_of(fn, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_backend(backend) -> dict[str, float]:
    rng = np.random.default_rng(0)
    times = {}

    a = rng.standard_normal((256, 128))
    b = rng.standard_normal((128, 128))
    times["matmul 256x128x128"] = best_of(lambda: backend.matmul(a, b))

    x = rng.standard_normal((256, 128))
    w = rng.standard_normal((128, 128))
    bias = rng.standard_normal(128)
    out = backend.dense_fwd(x, w, bias, True)
    d_out = rng.standard_normal(out.shape)
    times["dense fwd"] = best_of(lambda: backend.dense_fwd(x, w, bias, True))
    times["dense bwd"] = best_of(lambda: backend.dense_bwd(x, w, out, d_out, True))

    n = 512
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    parent[1:] = rng.integers(0, np.arange(1, n))
    order = np.arange(n, dtype=np.int64)
    h = rng.standard_normal((n, 128))
    w_self = rng.standard_normal((128, 128)) * 0.05
    w_msg = rng.standard_normal((128, 128)) * 0.05
    hb = rng.standard_normal(128)
    states = backend.tree_fwd(order, parent, h, w_self, w_msg, hb)
    times["tree fwd 512 nodes"] = best_of(
        lambda: backend.tree_fwd(order, parent, h, w_self, w_msg, hb))
    times["tree bwd 512 nodes"] = best_of(
        lambda: backend.tree_bwd(order, parent, h, w_self, w_msg, states,
                                 rng.standard_normal(states.shape)))

    p = rng.standard_normal(100_000)
    g = rng.standard_normal(100_000)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    times["adam 100k params"] = best_of(
        lambda: backend.adam_update(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8))
    return times


def bench_training_step() -> float:
    """One full forward/backward over a small batch with the active backend."""
    dataset = generate(SynthConfig(seed=0, graphs_per_workload=8))
    graphs = [g for _, g in dataset.graphs][:32]
    targets = np.log(np.array([g.runtime for g in graphs]))
    model = build_surrogate(ModelSpec.from_label("GCN2"), dataset.feature_dim,
                            dataset.type_vocab_size, seed=0)

    def step():
        zero_grad(model.parameters)
        loss = huber_loss(model.forward_graphs(graphs), targets)
        backward(loss)

    step()
    return best_of(step, repeats=3)


def main() -> None:
    backends = available_backends()
    names = [b.NAME for b in backends]
    print(f"backends: {', '.join(names)}")
    results = {b.NAME: bench_backend(b) for b in backends}

    rows = list(results[names[0]])
    width = max(len(r) for r in rows)
    header = f"{'kernel'.ljust(width)}  " + "  ".join(f"{n:>10}" for n in names)
    if len(names) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for row in rows:
        line = row.ljust(width) + "  " + "  ".join(
            f"{results[n][row] * 1e6:9.1f}u" for n in names)
        if len(names) == 2:
            ratio = results[names[0]][row] / results[names[1]][row]
            line += f"  {ratio:7.2f}x"
        print(line)

    from treecost.kernels import BACKEND
    print(f"\ntraining step (32 graphs, GCN2, backend={BACKEND}): "
          f"{bench_training_step() * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
