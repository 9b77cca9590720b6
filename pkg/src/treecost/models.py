"""Surrogate model families composed of four stages.

Every model is encode -> propagate -> aggregate -> predict: a shared
per-node encoder over [features || type embedding], an optional top-down
tree propagation stage (the GCN variants), mean aggregation over nodes, and
an MLP head ending in a single linear output. The Curve variant skips the
graph stages entirely and feeds a fixed-size curve vector to the head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .graphs import AstGraph

LABELS = ("MLP1", "MLP2", "MLP3", "GCN1", "GCN2", "GCN3", "Curve")

# encoder widths, propagation widths per label
_CANONICAL_WIDTHS = {
    "MLP1": ((128,), ()),
    "MLP2": ((128, 128), ()),
    "MLP3": ((128, 128, 128), ()),
    "GCN1": ((), (128,)),
    "GCN2": ((128,), (128,)),
    "GCN3": ((128, 128), (128,)),
    "Curve": ((), ()),
}

HEAD_WIDTHS = (128, 64)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of the encode/propagate/aggregate/predict stages."""

    label: str
    encoder_widths: tuple[int, ...] = ()
    propagation_widths: tuple[int, ...] = ()
    aggregation: str = "mean"
    head_widths: tuple[int, int] = HEAD_WIDTHS
    embedding_dim: int = 32
    message_pool: str = "max"
    message_direction: str = "top_down"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown model label {self.label!r}; expected one of {LABELS}")
        canonical = _CANONICAL_WIDTHS[self.label]
        if (self.encoder_widths, self.propagation_widths) != canonical:
            raise ValueError(
                f"{self.label} requires encoder/propagation widths {canonical}, "
                f"got {(self.encoder_widths, self.propagation_widths)}")
        if self.aggregation != "mean":
            raise ValueError("only mean aggregation is supported")
        if self.head_widths != HEAD_WIDTHS:
            raise ValueError(f"head widths are fixed at {HEAD_WIDTHS}")
        if self.message_pool != "max" or self.message_direction != "top_down":
            raise ValueError("propagation is max-pooled, top-down only")
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")

    @classmethod
    def from_label(cls, label: str, embedding_dim: int = 32) -> "ModelSpec":
        enc, prop = _CANONICAL_WIDTHS[label] if label in _CANONICAL_WIDTHS else ((), ())
        return cls(label=label, encoder_widths=enc, propagation_widths=prop,
                   embedding_dim=embedding_dim)

    @property
    def is_curve(self) -> bool:
        return self.label == "Curve"


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> nn.Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return nn.Parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


def _zeros(width: int) -> nn.Parameter:
    return nn.Parameter(np.zeros(width))


@dataclass
class Surrogate:
    """A model instance: spec plus all Parameters in declaration order."""

    spec: ModelSpec
    feature_dim: int
    type_vocab_size: int
    curve_width: int | None
    embedding: nn.Parameter | None
    encoder: list[tuple[nn.Parameter, nn.Parameter]]
    rounds: list[tuple[nn.Parameter, nn.Parameter, nn.Parameter]]
    head: list[tuple[nn.Parameter, nn.Parameter]]
    parameters: list[nn.Parameter] = field(default_factory=list)

    def __post_init__(self):
        params = [] if self.embedding is None else [self.embedding]
        for w, b in self.encoder:
            params += [w, b]
        for w_self, w_msg, b in self.rounds:
            params += [w_self, w_msg, b]
        for w, b in self.head:
            params += [w, b]
        self.parameters = params

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters)

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters]

    def restore(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.parameters, values):
            np.copyto(p.data, v)

    # -- forward passes ---------------------------------------------------

    def node_states(self, graph: AstGraph) -> nn.Tensor:
        return encode_nodes(graph, self)

    def graph_vector(self, graph: AstGraph) -> nn.Tensor:
        states = encode_nodes(graph, self)
        states = propagate(graph, states, self)
        return aggregate(states)

    def head_forward(self, x: nn.Tensor) -> nn.Tensor:
        last = len(self.head) - 1
        for i, (w, b) in enumerate(self.head):
            x = nn.dense_forward(x, w, b, "none" if i == last else "relu")
        return x

    def forward_graphs(self, graphs: list[AstGraph]) -> nn.Tensor:
        """Batched scalar predictions, shape (len(graphs),)."""
        if self.spec.is_curve:
            raise TypeError("Curve model expects curve feature vectors, not graphs")
        vectors = [self.graph_vector(g) for g in graphs]
        return nn.squeeze_cols(self.head_forward(nn.stack_rows(vectors)))

    def forward_curves(self, curve_matrix: np.ndarray) -> nn.Tensor:
        """Batched scalar predictions from (B, curve_width) curve features."""
        if not self.spec.is_curve:
            raise TypeError(f"{self.spec.label} model expects graphs, not curve vectors")
        x = np.asarray(curve_matrix, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.curve_width:
            raise ValueError(f"curve matrix must be (B, {self.curve_width}), got {x.shape}")
        return nn.squeeze_cols(self.head_forward(nn.Tensor(x)))


def build_surrogate(spec: ModelSpec, feature_dim: int, type_vocab_size: int,
                    seed: int = 0, curve_width: int | None = None) -> Surrogate:
    """Initialize a Surrogate; the seed fixes every initial weight."""
    rng = np.random.default_rng([seed, 0])
    if spec.is_curve:
        if curve_width is None or curve_width <= 0:
            raise ValueError("Curve models need a positive curve_width")
        head_in = curve_width
        embedding = None
        encoder = []
        rounds = []
    else:
        embedding = nn.Parameter(rng.normal(0.0, 0.1, size=(type_vocab_size, spec.embedding_dim)))
        width = feature_dim + spec.embedding_dim
        encoder = []
        for w_out in spec.encoder_widths:
            encoder.append((_glorot(rng, width, w_out), _zeros(w_out)))
            width = w_out
        rounds = []
        for w_out in spec.propagation_widths:
            rounds.append((_glorot(rng, width, w_out), _glorot(rng, w_out, w_out), _zeros(w_out)))
            width = w_out
        head_in = width
    head = []
    for w_out in (*spec.head_widths, 1):
        head.append((_glorot(rng, head_in, w_out), _zeros(w_out)))
        head_in = w_out
    return Surrogate(spec=spec, feature_dim=feature_dim, type_vocab_size=type_vocab_size,
                     curve_width=curve_width, embedding=embedding, encoder=encoder,
                     rounds=rounds, head=head)


# -- the four stages as module-level operations ---------------------------

def encode_nodes(graph: AstGraph, model: Surrogate) -> nn.Tensor:
    """Per-node vectors: encoder MLP over [features || embedding(node_type)].

    Weights are shared across nodes; with no encoder widths the
    concatenation passes through unchanged.
    """
    emb = nn.embedding_lookup(model.embedding, graph.node_types)
    states = nn.concat_cols(nn.Tensor(graph.features), emb)
    for w, b in model.encoder:
        states = nn.dense_forward(states, w, b, "relu")
    return states


def propagate(graph: AstGraph, node_states: nn.Tensor, model: Surrogate) -> nn.Tensor:
    """Top-down propagation rounds; MLP and Curve specs skip this stage.

    Within a round nodes update in topological order, so a parent's updated
    state feeds its children and the root's information reaches every leaf.
    In a tree the max-pooling over incoming messages degenerates to the
    single parent message.
    """
    order = graph.topo_order()
    parent = graph.parent_array()
    for w_self, w_msg, b in model.rounds:
        node_states = nn.tree_round(node_states, w_self, w_msg, b, order, parent)
    return node_states


def aggregate(node_states: nn.Tensor) -> nn.Tensor:
    """Column-wise mean over nodes (symmetric, permutation-invariant)."""
    return nn.mean_rows(node_states)


def predict(model: Surrogate, graph_or_curve) -> float:
    """Scalar runtime prediction for one graph or one curve vector."""
    if isinstance(graph_or_curve, AstGraph):
        return float(model.forward_graphs([graph_or_curve]).data[0])
    if isinstance(graph_or_curve, np.ndarray):
        return float(model.forward_curves(graph_or_curve.reshape(1, -1)).data[0])
    raise TypeError(f"expected AstGraph or curve ndarray, got {type(graph_or_curve).__name__}")


# -- checkpoints ----------------------------------------------------------

_CKPT_MAGIC = "treecost-checkpoint-v1"


def save_checkpoint(model: Surrogate, path, seed: int = 0, epoch: int = 0) -> None:
    """JSON header line + flat float64 parameter values in declaration order."""
    header = {
        "format": _CKPT_MAGIC,
        "label": model.spec.label,
        "embedding_dim": model.spec.embedding_dim,
        "feature_dim": model.feature_dim,
        "type_vocab_size": model.type_vocab_size,
        "curve_width": model.curve_width,
        "seed": seed,
        "epoch": epoch,
        "param_count": model.parameter_count,
    }
    flat = np.concatenate([p.data.reshape(-1) for p in model.parameters])
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[Surrogate, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    if flat.size != header["param_count"]:
        raise ValueError(f"{path}: expected {header['param_count']} values, got {flat.size}")
    spec = ModelSpec.from_label(header["label"], embedding_dim=header["embedding_dim"])
    model = build_surrogate(spec, header["feature_dim"], header["type_vocab_size"],
                            seed=header["seed"], curve_width=header["curve_width"])
    offset = 0
    for p in model.parameters:
        np.copyto(p.data, flat[offset:offset + p.size].reshape(p.data.shape))
        offset += p.size
    return model, header
