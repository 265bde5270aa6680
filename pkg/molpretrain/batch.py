# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Batched graph layout shared by pre-training samples and task inputs.

Every bond becomes two directed arcs; an arc ``j -> i`` puts `j` into the
neighbor set of `i`.  A collection node receives one virtual arc from every
ordinary node of its graph and sends none back.  Ordinary nodes that would
otherwise have nobody to attend to (atoms left without bonds) get a virtual
self arc in graphs that carry a collection node.

Self arcs are virtual too, so `arc_virtual` counts them: a lone ``C`` has two
virtual arcs, its self arc and its arc into the collection node.
`collection_arcs` selects only the latter; a stitched pair of 3 and 5 atoms
always has exactly 8 of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import (
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .chem import COLLECT, MolGraph
from .exceptions import StructureError
from .features import FeatureVocab, featurize

SEG1 = 0
SEG2 = 1
SEG_COLLECT = 2
NUM_SEGMENTS = 3


@dataclass
class BatchedGraph:
    atom_features: np.ndarray
    segment: np.ndarray
    graph_index: np.ndarray
    arc_source: np.ndarray
    arc_target: np.ndarray
    arc_features: np.ndarray
    arc_virtual: np.ndarray
    arc_segment: np.ndarray
    collection: np.ndarray
    num_graphs: int
    # atom index in the molecule the node came from; -1 for collection nodes
    origin: np.ndarray
    width: Optional[int] = None
    neighbor_arcs: np.ndarray = field(init=False, repr=False)
    neighbor_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.num_nodes
        in_degree = np.bincount(self.arc_target, minlength=n) if n else np.zeros(0)
        needed = int(in_degree.max()) if in_degree.size else 0
        if self.width is not None and self.width < needed:
            raise StructureError(f"slot width {self.width} below in-degree {needed}")
        width = max(self.width or needed, 1)
        self.width = width

        order = np.argsort(self.arc_target, kind="stable")
        targets = self.arc_target[order]
        rank = np.arange(len(order)) - np.searchsorted(targets, targets, side="left")
        self.neighbor_arcs = np.zeros((n, width), dtype=np.int64)
        self.neighbor_mask = np.zeros((n, width), dtype=bool)
        self.neighbor_arcs[targets, rank] = order
        self.neighbor_mask[targets, rank] = True

    @property
    def num_nodes(self) -> int:
        return len(self.segment)

    @property
    def num_arcs(self) -> int:
        return len(self.arc_source)

    @property
    def is_collection(self) -> np.ndarray:
        return self.segment == SEG_COLLECT

    @property
    def self_arcs(self) -> np.ndarray:
        return self.arc_source == self.arc_target

    @property
    def collection_arcs(self) -> np.ndarray:
        """Mask of the arcs that feed a collection node."""
        return self.is_collection[self.arc_target]

    def graph_nodes(self, graph: int, ordinary: bool = True) -> np.ndarray:
        selected = self.graph_index == graph
        if ordinary:
            selected &= ~self.is_collection
        return np.flatnonzero(selected)

    def with_atom_features(self, atom_features: np.ndarray) -> BatchedGraph:
        return BatchedGraph(
            atom_features=atom_features,
            segment=self.segment,
            graph_index=self.graph_index,
            arc_source=self.arc_source,
            arc_target=self.arc_target,
            arc_features=self.arc_features,
            arc_virtual=self.arc_virtual,
            arc_segment=self.arc_segment,
            collection=self.collection,
            num_graphs=self.num_graphs,
            origin=self.origin,
            width=self.width,
        )

    def without_collection(self) -> BatchedGraph:
        """Drop collection nodes and their arcs, keeping the slot width."""
        keep = ~self.is_collection
        new_index = np.cumsum(keep) - 1
        arcs = keep[self.arc_source] & keep[self.arc_target]
        return BatchedGraph(
            atom_features=self.atom_features[keep],
            segment=self.segment[keep],
            graph_index=self.graph_index[keep],
            arc_source=new_index[self.arc_source[arcs]],
            arc_target=new_index[self.arc_target[arcs]],
            arc_features=self.arc_features[arcs],
            arc_virtual=self.arc_virtual[arcs],
            arc_segment=self.arc_segment[arcs],
            collection=np.full(self.num_graphs, -1, dtype=np.int64),
            num_graphs=self.num_graphs,
            origin=self.origin[keep],
            width=self.width,
        )

    @classmethod
    def concat(cls, batches: Sequence[BatchedGraph]) -> BatchedGraph:
        """Stack independent graphs into one disconnected batch."""
        node_offsets = np.cumsum([0] + [b.num_nodes for b in batches])
        graph_offsets = np.cumsum([0] + [b.num_graphs for b in batches])

        def shifted(values, offsets):
            return np.concatenate([v + o for v, o in zip(values, offsets)])

        collection = [
            np.where(b.collection >= 0, b.collection + o, -1)
            for b, o in zip(batches, node_offsets)
        ]
        return cls(
            atom_features=np.concatenate([b.atom_features for b in batches]),
            segment=np.concatenate([b.segment for b in batches]),
            graph_index=shifted([b.graph_index for b in batches], graph_offsets),
            arc_source=shifted([b.arc_source for b in batches], node_offsets),
            arc_target=shifted([b.arc_target for b in batches], node_offsets),
            arc_features=np.concatenate([b.arc_features for b in batches]),
            arc_virtual=np.concatenate([b.arc_virtual for b in batches]),
            arc_segment=np.concatenate([b.arc_segment for b in batches]),
            collection=np.concatenate(collection),
            num_graphs=int(graph_offsets[-1]),
            origin=np.concatenate([b.origin for b in batches]),
        )


def assemble(
    parts: Sequence[Tuple[MolGraph, int]],
    vocab: FeatureVocab,
    collect: bool = True,
    origins: Optional[Sequence[Sequence[int]]] = None,
) -> BatchedGraph:
    """Lay out molecule parts, each tagged with a segment id, as one graph."""
    atom_rows: List[np.ndarray] = []
    segments: List[int] = []
    origin: List[int] = []
    sources: List[int] = []
    targets: List[int] = []
    arc_rows: List[np.ndarray] = []
    arc_segments: List[int] = []
    n_bond_fields = len(vocab.bond_fields)

    for part_index, (graph, segment) in enumerate(parts):
        offset = len(segments)
        atoms, bonds = featurize(graph, vocab)
        atom_rows.append(atoms)
        segments.extend([segment] * graph.num_atoms)
        if origins is not None:
            origin.extend(int(i) for i in origins[part_index])
        else:
            origin.extend(range(graph.num_atoms))
        for bond, row in zip(graph.bonds, bonds):
            for a, b in ((bond.a, bond.b), (bond.b, bond.a)):
                sources.append(offset + a)
                targets.append(offset + b)
                arc_rows.append(row)
                arc_segments.append(segment)

    n_ordinary = len(segments)
    n_real = len(sources)
    collection = np.full(1, -1, dtype=np.int64)
    if collect:
        # virtual self arcs for atoms without bonds
        has_neighbor = np.zeros(n_ordinary, dtype=bool)
        has_neighbor[targets] = True
        for node in np.flatnonzero(~has_neighbor):
            sources.append(int(node))
            targets.append(int(node))
            arc_segments.append(SEG_COLLECT)

        collection[0] = n_ordinary
        atom_rows.append(vocab.special_atom_indices(COLLECT)[None, :])
        segments.append(SEG_COLLECT)
        origin.append(-1)
        for node in range(n_ordinary):
            sources.append(node)
            targets.append(n_ordinary)
            arc_segments.append(SEG_COLLECT)

    n_arcs = len(sources)
    arc_features = np.zeros((n_arcs, n_bond_fields), dtype=np.int64)
    if n_real:
        arc_features[:n_real] = np.stack(arc_rows)
    arc_virtual = np.arange(n_arcs) >= n_real

    return BatchedGraph(
        atom_features=np.concatenate(atom_rows).astype(np.int64),
        segment=np.asarray(segments, dtype=np.int64),
        graph_index=np.zeros(len(segments), dtype=np.int64),
        arc_source=np.asarray(sources, dtype=np.int64),
        arc_target=np.asarray(targets, dtype=np.int64),
        arc_features=arc_features,
        arc_virtual=arc_virtual,
        arc_segment=np.asarray(arc_segments, dtype=np.int64),
        collection=collection,
        num_graphs=1,
        origin=np.asarray(origin, dtype=np.int64),
    )


def check_structure(batch: BatchedGraph):
    """Raise `StructureError` unless `batch` honors the collection-node contract.

    Shared by pre-training stitching and task input assembly so that weights
    trained on one transfer to the other without adaptation.
    """
    n = batch.num_nodes
    if not (
        len(batch.graph_index) == n
        and len(batch.atom_features) == n
        and len(batch.origin) == n
    ):
        raise StructureError("node arrays disagree in length")
    if n and (batch.arc_source.max(initial=0) >= n or batch.arc_target.max(initial=0) >= n):
        raise StructureError("arc endpoint out of range")
    if np.any(batch.graph_index[batch.arc_source] != batch.graph_index[batch.arc_target]):
        raise StructureError("arc crosses between graphs")

    src_seg = batch.segment[batch.arc_source]
    dst_seg = batch.segment[batch.arc_target]
    if np.any((src_seg == SEG1) & (dst_seg == SEG2)) or np.any(
        (src_seg == SEG2) & (dst_seg == SEG1)
    ):
        raise StructureError("arc joins the two segments directly")
    if np.any(batch.is_collection[batch.arc_source]):
        raise StructureError("arc leaves a collection node")

    for graph in range(batch.num_graphs):
        node = int(batch.collection[graph])
        if node < 0:
            continue
        if not batch.is_collection[node] or batch.graph_index[node] != graph:
            raise StructureError(f"graph {graph} points at a non-collection node")
        if np.count_nonzero(batch.is_collection & (batch.graph_index == graph)) != 1:
            raise StructureError(f"graph {graph} has more than one collection node")
        incoming = np.sort(batch.arc_source[batch.arc_target == node])
        if not np.array_equal(incoming, batch.graph_nodes(graph)):
            raise StructureError(f"collection node of graph {graph} misses arcs")
        if not np.all(batch.arc_virtual[batch.arc_target == node]):
            raise StructureError(f"collection node of graph {graph} has real arcs")

    listed = np.sort(batch.neighbor_arcs[batch.neighbor_mask])
    if not np.array_equal(listed, np.arange(batch.num_arcs)):
        raise StructureError("neighbor slots do not mirror the arc list")
    for node, arcs in enumerate(batch.neighbor_arcs):
        if np.any(batch.arc_target[arcs[batch.neighbor_mask[node]]] != node):
            raise StructureError(f"neighbor slots of node {node} are inconsistent")
