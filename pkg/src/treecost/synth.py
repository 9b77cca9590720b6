"""Deterministic generator of loop-nest ASTs with an analytic runtime oracle.

Stands in for on-hardware measurement at desk scale: trees of loop /
vectorize / unroll / work nodes whose "runtime" has a documented closed
form, optionally blurred by multiplicative log-normal noise. Everything is
a pure function of the seed; each workload derives an independent sub-seed,
so generation parallelizes cleanly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import AstGraph, Dataset, WorkloadMeta

# Fixed node-type vocabulary.
TYPE_ROOT = 0
TYPE_FOR = 1
TYPE_VECTORIZE = 2
TYPE_UNROLL = 3
TYPE_COMPUTE = 4
TYPE_LOAD = 5
TYPE_STORE = 6
TYPE_NAMES = ("root", "for", "vectorize", "unroll", "compute", "load", "store")
TYPE_VOCAB_SIZE = 7

# Feature schema (one row per node).
FEATURE_DIM = 6
COL_EXTENT = 0        # loop extent, 1 for non-loops
COL_DEPTH = 1
COL_LOG_ANCESTOR = 2  # log2 of the extent product of strict ancestors
COL_VECTORIZED = 3    # under (or at) a vectorize node
COL_UNROLLED = 4      # under (or at) an unroll node
COL_SUBTREE = 5       # subtree size including the node itself

EXTENT_CHOICES = (2, 4, 8, 16, 32)

# Oracle constants: arbitrary but fixed, chosen so wiring (not the node
# multiset) determines cost.
WORK_WEIGHTS = {TYPE_COMPUTE: 1.0, TYPE_LOAD: 0.4, TYPE_STORE: 0.6}
VECTORIZE_FACTOR = 0.25
UNROLL_FACTOR = 0.9
TIME_SCALE = 1e-4  # milliseconds per unit cost


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; the seed fully determines the output."""

    seed: int = 0
    graphs_per_workload: int = 40
    workload_specs: tuple[tuple[int, int], ...] = ((2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (5, 2))
    noise_std: float = 0.0  # stddev of log-runtime noise, applied multiplicatively

    def __post_init__(self):
        if self.graphs_per_workload < 0:
            raise ValueError("graphs_per_workload must be >= 0")
        if not 0.0 <= self.noise_std < 0.5:
            raise ValueError("noise_std must be in [0, 0.5)")
        if not self.workload_specs:
            raise ValueError("workload_specs must not be empty")
        for depth, branching in self.workload_specs:
            if not 2 <= depth <= 8:
                raise ValueError(f"max_depth must be in 2..8, got {depth}")
            if not 1 <= branching <= 4:
                raise ValueError(f"branching must be in 1..4, got {branching}")


def _workload_rng(config: SynthConfig, workload_index: int, stream: int) -> np.random.Generator:
    # per-workload sub-seed; streams keep generate / rewired draws independent
    return np.random.default_rng([config.seed, workload_index, stream])


def _grow_tree(rng: np.random.Generator, max_depth: int, branching: int):
    """Random loop-nest skeleton: (types, parents, extents) arrays."""
    types = [TYPE_ROOT]
    parents = [-1]
    extents = [1]

    def leaf_type():
        return int(rng.choice((TYPE_COMPUTE, TYPE_LOAD, TYPE_STORE), p=(0.5, 0.3, 0.2)))

    def add(parent, depth_left):
        if depth_left == 0:
            kind = leaf_type()
        else:
            kind = int(rng.choice(
                (TYPE_FOR, TYPE_VECTORIZE, TYPE_UNROLL, -1), p=(0.55, 0.08, 0.07, 0.30)))
            if kind == -1:
                kind = leaf_type()
        idx = len(types)
        types.append(kind)
        parents.append(parent)
        extents.append(int(rng.choice(EXTENT_CHOICES)) if kind == TYPE_FOR else 1)
        if kind in (TYPE_FOR, TYPE_VECTORIZE, TYPE_UNROLL):
            for _ in range(int(rng.integers(1, branching + 1))):
                add(idx, depth_left - 1)

    for _ in range(int(rng.integers(1, branching + 1))):
        add(0, max_depth - 1)
    return (np.array(types, dtype=np.int64),
            np.array(parents, dtype=np.int64),
            np.array(extents, dtype=np.int64))


def _node_features(types: np.ndarray, parents: np.ndarray, extents: np.ndarray) -> np.ndarray:
    """Feature rows per the fixed schema; parents[i] < i is assumed."""
    n = len(types)
    feats = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    subtree = np.ones(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        subtree[parents[i]] += subtree[i]
    for i in range(n):
        p = parents[i]
        feats[i, COL_EXTENT] = extents[i]
        if p >= 0:
            feats[i, COL_DEPTH] = feats[p, COL_DEPTH] + 1
            anc = feats[p, COL_LOG_ANCESTOR]
            if types[p] == TYPE_FOR:
                anc += math.log2(extents[p])
            feats[i, COL_LOG_ANCESTOR] = anc
            feats[i, COL_VECTORIZED] = feats[p, COL_VECTORIZED]
            feats[i, COL_UNROLLED] = feats[p, COL_UNROLLED]
        if types[i] == TYPE_VECTORIZE:
            feats[i, COL_VECTORIZED] = 1.0
        if types[i] == TYPE_UNROLL:
            feats[i, COL_UNROLLED] = 1.0
        feats[i, COL_SUBTREE] = subtree[i]
    return feats


def _oracle_scan(types, parent, order, extents) -> float:
    scale = np.zeros(len(types), dtype=np.float64)  # running ancestor factor
    total = 0.0
    for v in order:
        p = parent[v]
        if p < 0:
            factor = 1.0
        else:
            factor = scale[p]
            tp = types[p]
            if tp == TYPE_FOR:
                factor *= extents[p]
            elif tp == TYPE_VECTORIZE:
                factor *= VECTORIZE_FACTOR
            elif tp == TYPE_UNROLL:
                factor *= UNROLL_FACTOR
        scale[v] = factor
        w = WORK_WEIGHTS.get(int(types[v]))
        if w is not None:
            total += factor * w
    if total <= 0.0:
        raise ValueError("graph has no compute/load/store nodes")
    return TIME_SCALE * total


def oracle_runtime(graph: AstGraph) -> float:
    """Closed-form runtime of a synth-vocabulary tree, in milliseconds.

    Each compute/load/store node costs (product of ancestor loop extents)
    x its type weight, /4 per ancestor vectorize, x0.9 per ancestor unroll;
    the runtime is TIME_SCALE times the total. Loop extents are read from
    the extent feature column.
    """
    types = graph.node_types
    if types.size and int(types.max()) >= TYPE_VOCAB_SIZE:
        raise ValueError(f"unknown node type id {int(types.max())}")
    return _oracle_scan(types, graph.parent_array(), graph.topo_order(),
                        graph.features[:, COL_EXTENT])


def _edges_from_parents(parents: np.ndarray) -> np.ndarray:
    rows = [(int(p), int(c)) for c, p in enumerate(parents) if p >= 0]
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def _noisy(runtime: float, rng: np.random.Generator, noise_std: float) -> float:
    return runtime * math.exp(float(rng.normal(0.0, noise_std)))


def _synth_meta(workload_id: str, max_depth: int, branching: int, count: int) -> WorkloadMeta:
    # plausible placeholder operator shapes; only the id and count matter
    return WorkloadMeta(id=workload_id, H=28, W=28, c_in=8 * branching,
                        c_out=8 * branching * max_depth, kernel=(3, 3), stride=(1, 1),
                        padding=(1, 1), dilation=(1, 1), config_count=count)


def generate(config: SynthConfig) -> Dataset:
    """Random loop-nest dataset; runtimes are oracle values times noise."""
    workloads = []
    graphs: list[tuple[str, AstGraph]] = []
    if config.graphs_per_workload > 0:
        for i, (max_depth, branching) in enumerate(config.workload_specs):
            rng = _workload_rng(config, i, stream=0)
            wid = f"S{i + 1}"
            workloads.append(_synth_meta(wid, max_depth, branching, config.graphs_per_workload))
            for _ in range(config.graphs_per_workload):
                types, parents, extents = _grow_tree(rng, max_depth, branching)
                feats = _node_features(types, parents, extents)
                base = _oracle_scan(types, parents, np.arange(len(types)), extents)
                graph = AstGraph(node_count=len(types), edges=_edges_from_parents(parents),
                                 features=feats, node_types=types,
                                 runtime=_noisy(base, rng, config.noise_std))
                graphs.append((wid, graph))
    return Dataset(workloads=workloads, graphs=graphs,
                   feature_dim=FEATURE_DIM, type_vocab_size=TYPE_VOCAB_SIZE)


def make_rewired_pairs(config: SynthConfig) -> Dataset:
    """Benchmark pairs that bag-of-nodes models provably cannot separate.

    Each pair shares the node types and the feature matrix verbatim but is
    wired differently: one member nests a work node under the full loop
    chain, the other under only the first loop (the spare loops hang off the
    root doing nothing). Oracle runtimes therefore differ by the product of
    the remaining extents, i.e. by at least 2x. Structure-derived feature
    columns describe the nested member for both, so only the edges tell the
    members apart. ``graphs_per_workload`` counts pairs per workload spec.
    """
    workloads = []
    graphs: list[tuple[str, AstGraph]] = []
    if config.graphs_per_workload > 0:
        for i, (max_depth, branching) in enumerate(config.workload_specs):
            if max_depth < 3:
                raise ValueError("rewired pairs need max_depth >= 3 (two nested loops)")
            rng = _workload_rng(config, i, stream=1)
            wid = f"P{i + 1}"
            workloads.append(_synth_meta(wid, max_depth, branching,
                                         2 * config.graphs_per_workload))
            for _ in range(config.graphs_per_workload):
                loops = int(rng.integers(2, min(3, max_depth - 1) + 1))
                extents = rng.choice(EXTENT_CHOICES, size=loops)
                work = int(rng.choice((TYPE_COMPUTE, TYPE_LOAD, TYPE_STORE), p=(0.5, 0.3, 0.2)))
                n = loops + 2
                types = np.array([TYPE_ROOT] + [TYPE_FOR] * loops + [work], dtype=np.int64)
                node_extents = np.array([1] + [int(e) for e in extents] + [1], dtype=np.int64)
                # nested member: root -> f1 -> ... -> fL -> work
                nested_parents = np.array([-1] + list(range(loops)) + [loops], dtype=np.int64)
                feats = _node_features(types, nested_parents, node_extents)
                # flat member: work under f1 only; f2..fL dangle as a chain off the root
                flat_parents = nested_parents.copy()
                flat_parents[n - 1] = 1
                flat_parents[2] = 0
                for wiring in (nested_parents, flat_parents):
                    base = _oracle_scan(types, wiring, np.arange(n), node_extents)
                    graphs.append((wid, AstGraph(
                        node_count=n, edges=_edges_from_parents(wiring), features=feats,
                        node_types=types, runtime=_noisy(base, rng, config.noise_std))))
    return Dataset(workloads=workloads, graphs=graphs,
                   feature_dim=FEATURE_DIM, type_vocab_size=TYPE_VOCAB_SIZE)
