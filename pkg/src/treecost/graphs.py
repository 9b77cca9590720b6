"""Domain types for configuration ASTs and datasets, plus the on-disk format.

A configuration of a tensor program is stored as a rooted tree: directed
parent->child edges, one row of numeric features per node, one small integer
type id per node, and the measured runtime in milliseconds. A dataset groups
many such graphs under named workloads (one workload = one fixed operator
parameterization, e.g. a Conv2D shape).

On disk a dataset is a directory with a ``manifest.json`` and one JSON-Lines
record file per workload; floats are serialized with full round-trip
precision so save/load is bit-exact.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset directory, manifest, or graph record."""


class GraphValidationError(ValueError):
    """An AstGraph violates a structural invariant (e.g. not a tree)."""


@dataclass(eq=False)
class AstGraph:
    """One configuration: a rooted tree with per-node features and a runtime.

    Instances are immutable after construction (arrays are marked read-only);
    they are safe to share across concurrent workers.
    """

    node_count: int
    edges: np.ndarray       # (m, 2) int64, rows are (parent, child)
    features: np.ndarray    # (node_count, feature_dim) float64
    node_types: np.ndarray  # (node_count,) int64
    runtime: float          # milliseconds, > 0
    root_index: int = 0

    def __post_init__(self):
        self.edges = np.ascontiguousarray(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        self.node_types = np.ascontiguousarray(np.asarray(self.node_types, dtype=np.int64).reshape(-1))
        self.runtime = float(self.runtime)
        self._validate()
        self._child_lists = self._build_children()
        self._check_tree()
        self.edges.setflags(write=False)
        self.features.setflags(write=False)
        self.node_types.setflags(write=False)
        self._parent_of = None
        self._topo = None

    def _validate(self):
        n = self.node_count
        if n <= 0:
            raise GraphValidationError("node_count must be positive")
        if not (0 <= self.root_index < n):
            raise GraphValidationError(f"root_index {self.root_index} out of range for {n} nodes")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphValidationError(
                f"features must have {n} rows, got shape {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise GraphValidationError("features contain non-finite values")
        if self.node_types.shape[0] != n:
            raise GraphValidationError("node_types length does not match node_count")
        if (self.node_types < 0).any():
            raise GraphValidationError("node_types must be non-negative")
        if not (np.isfinite(self.runtime) and self.runtime > 0):
            raise GraphValidationError(f"runtime must be positive and finite, got {self.runtime}")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise GraphValidationError("edge endpoint out of range")
            if (self.edges[:, 0] == self.edges[:, 1]).any():
                raise GraphValidationError("self-loop edge")

    def _build_children(self):
        lists = [[] for _ in range(self.node_count)]
        for p, c in self.edges:
            lists[int(p)].append(int(c))
        return [tuple(children) for children in lists]

    def _check_tree(self):
        n = self.node_count
        if self.edges.shape[0] != n - 1:
            raise GraphValidationError(
                f"tree needs {n - 1} edges for {n} nodes, got {self.edges.shape[0]}")
        parent_seen = np.zeros(n, dtype=bool)
        for _, c in self.edges:
            c = int(c)
            if c == self.root_index:
                raise GraphValidationError("root has an incoming edge")
            if parent_seen[c]:
                raise GraphValidationError(f"node {c} has more than one parent")
            parent_seen[c] = True
        # n-1 edges with unique non-root children reach every node iff connected
        reached = 0
        stack = [self.root_index]
        visited = np.zeros(n, dtype=bool)
        while stack:
            v = stack.pop()
            if visited[v]:
                continue
            visited[v] = True
            reached += 1
            stack.extend(self._child_lists[v])
        if reached != n:
            raise GraphValidationError("edge set is not connected to the root")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def parent_array(self) -> np.ndarray:
        """Parent index per node, -1 for the root. Cached."""
        if self._parent_of is None:
            parent = np.full(self.node_count, -1, dtype=np.int64)
            for p, c in self.edges:
                parent[int(c)] = int(p)
            parent.setflags(write=False)
            self._parent_of = parent
        return self._parent_of

    def topo_order(self) -> np.ndarray:
        """Cached ``topological_order(self)`` as an int64 array."""
        if self._topo is None:
            order = np.asarray(topological_order(self), dtype=np.int64)
            order.setflags(write=False)
            self._topo = order
        return self._topo

    def __eq__(self, other):
        if not isinstance(other, AstGraph):
            return NotImplemented
        return (self.node_count == other.node_count
                and self.root_index == other.root_index
                and self.runtime == other.runtime
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.node_types, other.node_types))


@dataclass(frozen=True)
class WorkloadMeta:
    """One operator parameterization (a Conv2D shape) and its record count."""

    id: str
    H: int
    W: int
    c_in: int
    c_out: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: tuple[int, int]
    dilation: tuple[int, int]
    config_count: int

    def __post_init__(self):
        for name in ("H", "W", "c_in", "c_out", "config_count"):
            if getattr(self, name) <= 0:
                raise GraphValidationError(f"workload {self.id}: {name} must be positive")


# The twelve unique Conv2D workloads of a ResNet18 on an x86 CPU target.
RESNET18_CONV_WORKLOADS = tuple(
    WorkloadMeta(id_, h, w, ci, co, (k, k), (s, s), (p, p), (1, 1), n)
    for id_, h, w, ci, co, k, s, p, n in [
        ("C1", 224, 224, 3, 64, 7, 2, 3, 252),
        ("C2", 56, 56, 64, 64, 3, 1, 1, 784),
        ("C3", 56, 56, 64, 64, 1, 1, 1, 784),
        ("C4", 56, 56, 64, 128, 3, 2, 1, 672),
        ("C5", 56, 56, 64, 128, 1, 2, 1, 672),
        ("C6", 28, 28, 128, 128, 3, 1, 1, 768),
        ("C7", 28, 28, 128, 256, 3, 2, 1, 576),
        ("C8", 28, 28, 128, 256, 1, 2, 1, 576),
        ("C9", 14, 14, 256, 256, 3, 1, 1, 648),
        ("C10", 14, 14, 256, 512, 3, 2, 1, 360),
        ("C11", 14, 14, 256, 512, 1, 2, 1, 360),
        ("C12", 7, 7, 512, 512, 3, 1, 1, 400),
    ]
)


@dataclass
class Dataset:
    """A workload-tagged collection of AstGraphs.

    ``graphs`` holds (workload_id, graph) pairs in a stable order; loading a
    saved dataset preserves it. Immutable by convention after construction.
    """

    workloads: list[WorkloadMeta]
    graphs: list[tuple[str, AstGraph]]
    feature_dim: int
    type_vocab_size: int

    def __post_init__(self):
        self.validate()

    def validate(self):
        ids = [w.id for w in self.workloads]
        if len(set(ids)) != len(ids):
            raise GraphValidationError("duplicate workload ids")
        known = set(ids)
        for wid, g in self.graphs:
            if wid not in known:
                raise GraphValidationError(f"graph tagged with unknown workload {wid!r}")
            if g.feature_dim != self.feature_dim:
                raise GraphValidationError(
                    f"graph in {wid} has feature_dim {g.feature_dim}, dataset has {self.feature_dim}")
            if g.node_types.size and int(g.node_types.max()) >= self.type_vocab_size:
                raise GraphValidationError(
                    f"graph in {wid} has node type >= vocab size {self.type_vocab_size}")

    def __len__(self) -> int:
        return len(self.graphs)

    def runtimes(self) -> np.ndarray:
        return np.array([g.runtime for _, g in self.graphs], dtype=np.float64)

    def workload_ids(self) -> list[str]:
        return [wid for wid, _ in self.graphs]

    def indices_for(self, workload_ids) -> np.ndarray:
        wanted = set(workload_ids)
        return np.array([i for i, (wid, _) in enumerate(self.graphs) if wid in wanted],
                        dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.workloads == other.workloads
                and self.feature_dim == other.feature_dim
                and self.type_vocab_size == other.type_vocab_size
                and len(self.graphs) == len(other.graphs)
                and all(a == c and b == d for (a, b), (c, d) in zip(self.graphs, other.graphs)))


def children(graph: AstGraph, node: int) -> list[int]:
    """Child indices of ``node`` in stored edge order; empty for leaves."""
    if not (0 <= node < graph.node_count):
        raise IndexError(f"node {node} out of range for {graph.node_count} nodes")
    return list(graph._child_lists[node])


def topological_order(graph: AstGraph) -> list[int]:
    """Root-first order in which every parent precedes its children.

    Ties (several nodes ready at once) are broken by node index, so the
    order is deterministic and independent of edge insertion order.
    """
    ready = [graph.root_index]
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in graph._child_lists[v]:
            heapq.heappush(ready, c)
    if len(order) != graph.node_count:
        raise GraphValidationError("cycle detected or unreachable nodes")
    return order


# ---------------------------------------------------------------------------
# On-disk format

MANIFEST_NAME = "manifest.json"


def _workload_record_name(wid: str) -> str:
    return f"{wid}.jsonl"


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` to directory ``path`` (manifest + one JSONL per workload).

    Output is byte-identical across repeated saves of an equal dataset.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "feature_dim": dataset.feature_dim,
        "type_vocab_size": dataset.type_vocab_size,
        "workloads": [
            {
                "id": w.id, "H": w.H, "W": w.W, "c_in": w.c_in, "c_out": w.c_out,
                "kernel": list(w.kernel), "stride": list(w.stride),
                "padding": list(w.padding), "dilation": list(w.dilation),
                "config_count": w.config_count, "file": _workload_record_name(w.id),
            }
            for w in dataset.workloads
        ],
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    by_workload = {w.id: [] for w in dataset.workloads}
    for wid, g in dataset.graphs:
        by_workload[wid].append(g)
    for w in dataset.workloads:
        with (out / _workload_record_name(w.id)).open("w") as fh:
            for g in by_workload[w.id]:
                record = {
                    "n": g.node_count,
                    "edges": [[int(p), int(c)] for p, c in g.edges],
                    "features": [[float(v) for v in row] for row in g.features],
                    "types": [int(t) for t in g.node_types],
                    "runtime": g.runtime,
                    "root": g.root_index,
                }
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_dataset(path) -> Dataset:
    """Load a dataset directory written by :func:`save_dataset`.

    Record order is preserved: graphs appear grouped by workload in manifest
    order, records in file order.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed manifest {manifest_path}: {exc}") from exc
    try:
        feature_dim = int(manifest["feature_dim"])
        type_vocab_size = int(manifest["type_vocab_size"])
        entries = manifest["workloads"]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"manifest {manifest_path} missing field: {exc}") from exc

    workloads = []
    graphs: list[tuple[str, AstGraph]] = []
    for entry in entries:
        try:
            meta = WorkloadMeta(
                id=entry["id"], H=entry["H"], W=entry["W"],
                c_in=entry["c_in"], c_out=entry["c_out"],
                kernel=tuple(entry["kernel"]), stride=tuple(entry["stride"]),
                padding=tuple(entry["padding"]), dilation=tuple(entry["dilation"]),
                config_count=entry["config_count"],
            )
            record_file = entry["file"]
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"manifest workload entry malformed: {exc}") from exc
        workloads.append(meta)
        record_path = root / record_file
        if not record_path.is_file():
            raise DatasetError(f"missing record file {record_path} for workload {meta.id}")
        with record_path.open() as fh:
            for index, line in enumerate(fh, start=1):  # 1-based, matches line numbers
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    graph = AstGraph(
                        node_count=rec["n"],
                        edges=np.array(rec["edges"], dtype=np.int64).reshape(-1, 2),
                        features=np.array(rec["features"], dtype=np.float64).reshape(rec["n"], -1),
                        node_types=rec["types"],
                        runtime=rec["runtime"],
                        root_index=rec["root"],
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise DatasetError(
                        f"{record_path}: record {index}: {exc}") from exc
                if graph.feature_dim != feature_dim:
                    raise DatasetError(
                        f"{record_path}: record {index}: feature_dim {graph.feature_dim} "
                        f"does not match manifest feature_dim {feature_dim}")
                graphs.append((meta.id, graph))
    try:
        return Dataset(workloads=workloads, graphs=graphs,
                       feature_dim=feature_dim, type_vocab_size=type_vocab_size)
    except GraphValidationError as exc:
        raise DatasetError(str(exc)) from exc
