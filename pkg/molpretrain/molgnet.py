# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Attention-based message passing backbone with a collection node.

Each layer runs `steps_per_layer` message-passing steps with shared weights.
A step is neighbor attention, a residual feed-forward block, and a gated
recurrent update of the hidden state.
"""

import math
from dataclasses import dataclass, field, fields
from typing import (
    Dict,
    Iterator,
    List,
    Optional,
    Tuple,
)

import numpy as np

from . import numcore as nc
from .batch import NUM_SEGMENTS, BatchedGraph
from .exceptions import ConfigError, IsolatedNodeError, ShapeError, StructureError
from .features import FeatureVocab
from .numcore import Tensor

READOUTS = ("collection", "mean")
GRU_WEIGHTS = ("W_mr", "W_xr", "W_mu", "W_xu", "W_in", "W_hn")
GRU_BIASES = ("b_mr", "b_hr", "b_mu", "b_hu", "b_in", "b_hn")
EMBED_STD = 0.02


@dataclass(frozen=True)
class MolGNetConfig:
    n_layers: int = 3
    steps_per_layer: int = 2
    hidden: int = 64
    heads: int = 4
    ffn: Optional[int] = None
    atom_vocab_size: int = FeatureVocab.default().atom_vocab_size
    bond_vocab_size: int = FeatureVocab.default().bond_vocab_size
    # The update blends the step input x rather than the previous hidden state.
    literal_gru_blend: bool = True
    reset_hidden_per_layer: bool = True
    readout: str = "collection"
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.ffn is None:
            object.__setattr__(self, "ffn", 4 * self.hidden)
        self.validate()

    @classmethod
    def full_scale(cls, **overrides) -> "MolGNetConfig":
        """The full-size configuration; far too slow for desk runs."""
        values = dict(n_layers=5, steps_per_layer=3, hidden=768, heads=12, ffn=3072)
        values.update(overrides)
        return cls(**values)

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def validate(self):
        for name in ("n_layers", "steps_per_layer", "hidden", "heads", "ffn"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.hidden % self.heads:
            raise ConfigError(
                f"model.hidden ({self.hidden}) is not divisible "
                f"by model.heads ({self.heads})"
            )
        if self.readout not in READOUTS:
            raise ConfigError(f"model.readout must be one of {', '.join(READOUTS)}")

    def as_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def parameter_shapes(config: MolGNetConfig) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of every backbone tensor, in checkpoint order."""
    d, f = config.hidden, config.ffn
    shapes: Dict[str, Tuple[int, ...]] = {
        "embed.atom": (config.atom_vocab_size, d),
        "embed.bond": (config.bond_vocab_size, d),
        "embed.segment": (NUM_SEGMENTS, d),
        "embed.virtual_edge": (d,),
    }
    for n in range(config.n_layers):
        p = f"layer{n}"
        for name in ("W_q", "W_k", "W_v", "W_m"):
            shapes[f"{p}.attn.{name}"] = (d, d)
        shapes[f"{p}.ffn.W_1"] = (f, d)
        shapes[f"{p}.ffn.b_1"] = (f,)
        shapes[f"{p}.ffn.W_2"] = (d, f)
        shapes[f"{p}.ffn.b_2"] = (d,)
        for norm in ("norm1", "norm2"):
            shapes[f"{p}.{norm}.gamma"] = (d,)
            shapes[f"{p}.{norm}.beta"] = (d,)
        for name in GRU_WEIGHTS:
            shapes[f"{p}.gru.{name}"] = (d, d)
        for name in GRU_BIASES:
            shapes[f"{p}.gru.{name}"] = (d,)
    return shapes


def initial_value(
    name: str, shape: Tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if name.startswith("embed.") or leaf == "virtual_edge":
        return rng.normal(0.0, EMBED_STD, size=shape)
    if leaf == "gamma":
        return np.ones(shape)
    if len(shape) == 2 and leaf.startswith("W"):
        return xavier_uniform(rng, shape)
    return np.zeros(shape)


@dataclass
class MolGNetParams:
    """Named backbone tensors; iteration follows `parameter_shapes` order."""

    config: MolGNetConfig
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: MolGNetConfig, seed: int = 0) -> "MolGNetParams":
        rng = np.random.default_rng(seed)
        tensors = {
            name: Tensor(initial_value(name, shape, rng), requires_grad=True)
            for name, shape in parameter_shapes(config).items()
        }
        return cls(config, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def copy(self) -> "MolGNetParams":
        return MolGNetParams(
            self.config,
            {
                name: Tensor(t.data.copy(), requires_grad=True)
                for name, t in self.tensors.items()
            },
        )

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        expected = parameter_shapes(self.config)
        for name, shape in expected.items():
            if name not in arrays:
                raise ShapeError(f"missing parameter {name}")
            if tuple(arrays[name].shape) != shape:
                raise ShapeError(
                    f"parameter {name} has shape {arrays[name].shape}, expected {shape}"
                )
        for name in expected:
            self.tensors[name].data = np.array(
                arrays[name], dtype=self.tensors[name].data.dtype
            )


@dataclass
class ForwardResult:
    states: Tensor
    # attention[layer][step] has shape (nodes, heads, slots); padded slots are 0
    attention: List[List[np.ndarray]]


def embed_inputs(batch: BatchedGraph, params: MolGNetParams) -> Tuple[Tensor, Tensor]:
    """Initial node states and constant arc states.

    Node state is the sum of its field embeddings plus its segment embedding.
    A real arc carries its bond's field embeddings, a virtual arc the shared
    virtual-edge vector; both add the arc's segment embedding.
    """
    segment_table = params["embed.segment"]
    x = nc.sum(nc.embedding_lookup(params["embed.atom"], batch.atom_features), axis=1)
    x = nc.add(x, nc.embedding_lookup(segment_table, batch.segment))

    real = (~batch.arc_virtual).astype(np.float64)[:, None]
    bond = nc.sum(nc.embedding_lookup(params["embed.bond"], batch.arc_features), axis=1)
    e = nc.add(
        nc.mul(bond, real),
        nc.mul(params["embed.virtual_edge"], 1.0 - real),
    )
    e = nc.add(e, nc.embedding_lookup(segment_table, batch.arc_segment))
    return x, e


def _check_neighbors(batch: BatchedGraph):
    empty = ~batch.neighbor_mask.any(axis=1)
    if not empty.any():
        return
    node = int(np.flatnonzero(empty)[0])
    if batch.is_collection[node]:
        raise StructureError(f"collection node {node} receives no arcs")
    raise IsolatedNodeError(
        f"node {node} has no neighbors; add a collection node to give it context"
    )


def neighbor_attention(
    x: Tensor,
    e: Tensor,
    batch: BatchedGraph,
    params: MolGNetParams,
    layer: int,
) -> Tuple[Tensor, np.ndarray]:
    """Multi-head attention of every node over its incoming arcs.

    Keys and values of a neighbor combine the neighbor's state with the state
    of the arc it arrives on.  Returns the projected messages and the
    attention weights, shape (nodes, heads, slots).
    """
    config = params.config
    _check_neighbors(batch)
    n, width = batch.neighbor_arcs.shape
    heads, dk = config.heads, config.head_dim
    p = f"layer{layer}.attn"

    slots = batch.neighbor_arcs
    senders = batch.arc_source[slots]

    def slot_projection(weight):
        return nc.add(
            nc.gather_rows(nc.linear(x, weight), senders),
            nc.gather_rows(nc.linear(e, weight), slots),
        )

    q = nc.reshape(nc.linear(x, params[f"{p}.W_q"]), (n, heads, dk))
    k = nc.reshape(slot_projection(params[f"{p}.W_k"]), (n, width, heads, dk))
    v = nc.reshape(slot_projection(params[f"{p}.W_v"]), (n, width, heads, dk))

    scores = nc.mul(nc.einsum("nkc,njkc->nkj", q, k), 1.0 / math.sqrt(dk))
    weights = nc.softmax_rows(scores, batch.neighbor_mask[:, None, :])
    mixed = nc.reshape(nc.einsum("nkj,njkc->nkc", weights, v), (n, config.hidden))
    return nc.linear(mixed, params[f"{p}.W_m"]), weights.data.copy()


def feed_forward(u: Tensor, params: MolGNetParams, layer: int) -> Tensor:
    p = f"layer{layer}.ffn"
    inner = nc.gelu(nc.linear(u, params[f"{p}.W_1"], params[f"{p}.b_1"]))
    return nc.linear(inner, params[f"{p}.W_2"], params[f"{p}.b_2"])


def gru_update(m: Tensor, h: Tensor, x: Tensor, params: MolGNetParams, layer: int):
    p = f"layer{layer}.gru"

    def gate(wm, wh, bm, bh, act):
        return act(
            nc.add(
                nc.linear(m, params[f"{p}.{wm}"], params[f"{p}.{bm}"]),
                nc.linear(h, params[f"{p}.{wh}"], params[f"{p}.{bh}"]),
            )
        )

    reset = gate("W_mr", "W_xr", "b_mr", "b_hr", nc.sigmoid)
    update = gate("W_mu", "W_xu", "b_mu", "b_hu", nc.sigmoid)
    candidate = nc.tanh(
        nc.add(
            nc.linear(m, params[f"{p}.W_in"], params[f"{p}.b_in"]),
            nc.mul(reset, nc.linear(h, params[f"{p}.W_hn"], params[f"{p}.b_hn"])),
        )
    )
    carry = x if params.config.literal_gru_blend else h
    return nc.add(nc.mul(nc.sub(1.0, update), carry), nc.mul(update, candidate))


def message_passing_step(
    x: Tensor,
    h: Tensor,
    e: Tensor,
    batch: BatchedGraph,
    params: MolGNetParams,
    layer: int,
) -> Tuple[Tensor, Tensor, np.ndarray]:
    """One step; returns the new node state, new hidden state and attention.

    The new node state equals the new hidden state.  In `forward` with a
    per-layer reset the hidden state always equals the step input, so the
    literal and standard blends only differ when called with ``h != x``.
    """
    eps = params.config.layer_norm_eps
    p = f"layer{layer}"
    messages, attention = neighbor_attention(x, e, batch, params, layer)
    u = nc.layer_norm(
        nc.add(x, messages), params[f"{p}.norm1.gamma"], params[f"{p}.norm1.beta"], eps
    )
    m = nc.layer_norm(
        nc.add(u, feed_forward(u, params, layer)),
        params[f"{p}.norm2.gamma"],
        params[f"{p}.norm2.beta"],
        eps,
    )
    h_next = gru_update(m, h, x, params, layer)
    return h_next, h_next, attention


def forward(batch: BatchedGraph, params: MolGNetParams) -> ForwardResult:
    config = params.config
    x, e = embed_inputs(batch, params)
    h = x
    attention: List[List[np.ndarray]] = []
    for layer in range(config.n_layers):
        if config.reset_hidden_per_layer:
            h = x
        per_step = []
        for _ in range(config.steps_per_layer):
            x, h, weights = message_passing_step(x, h, e, batch, params, layer)
            per_step.append(weights)
        attention.append(per_step)
    return ForwardResult(states=x, attention=attention)


def collection_embedding(batch: BatchedGraph, states: Tensor) -> Tensor:
    """Final state of each graph's collection node, shape (graphs, hidden)."""
    if np.any(batch.collection < 0):
        raise StructureError("a graph in the batch has no collection node")
    return nc.gather_rows(states, batch.collection)


def mean_pool_embedding(batch: BatchedGraph, states: Tensor) -> Tensor:
    """Mean final state over each graph's ordinary nodes."""
    ordinary = ~batch.is_collection
    counts = np.bincount(batch.graph_index[ordinary], minlength=batch.num_graphs)
    if np.any(counts == 0):
        raise StructureError("a graph in the batch has no ordinary nodes")
    weights = ordinary.astype(np.float64)[:, None]
    pooled = nc.segment_sum(nc.mul(states, weights), batch.graph_index, batch.num_graphs)
    return nc.mul(pooled, 1.0 / counts[:, None])


def graph_embedding(batch: BatchedGraph, states: Tensor, readout: str) -> Tensor:
    if readout == "mean":
        return mean_pool_embedding(batch, states)
    return collection_embedding(batch, states)


def collection_attention_weights(
    result: ForwardResult, batch: BatchedGraph, head: Optional[int] = None
) -> List[np.ndarray]:
    """Last-step attention of each collection node over its graph's atoms.

    Returns one vector per graph, aligned with `batch.graph_nodes(g)` and
    summing to 1.  Heads are averaged unless `head` selects one.
    """
    final = result.attention[-1][-1]
    if head is not None and not 0 <= head < final.shape[1]:
        raise ShapeError(f"head {head} outside [0, {final.shape[1]})")
    out = []
    for graph in range(batch.num_graphs):
        node = int(batch.collection[graph])
        if node < 0:
            raise StructureError(f"graph {graph} has no collection node")
        rows = final[node] if head is None else final[node, head : head + 1]
        per_slot = rows.mean(axis=0)
        mask = batch.neighbor_mask[node]
        senders = batch.arc_source[batch.neighbor_arcs[node][mask]]
        nodes = batch.graph_nodes(graph)
        weights = np.zeros(len(nodes))
        weights[np.searchsorted(nodes, senders)] = per_slot[mask]
        out.append(weights / weights.sum())
    return out
