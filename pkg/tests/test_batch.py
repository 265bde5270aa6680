# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from dataclasses import replace

import numpy as np
import pytest

from molpretrain.batch import (
    SEG1,
    SEG2,
    SEG_COLLECT,
    BatchedGraph,
    assemble,
    check_structure,
)
from molpretrain.chem import parse_smiles
from molpretrain.exceptions import StructureError
from molpretrain.features import FeatureVocab
from molpretrain.finetuning import assemble_pair, assemble_single

VOCAB = FeatureVocab.default()


def with_extra_arc(batch, source, target):
    return replace(
        batch,
        arc_source=np.append(batch.arc_source, source),
        arc_target=np.append(batch.arc_target, target),
        arc_features=np.vstack([batch.arc_features, batch.arc_features[:1]]),
        arc_virtual=np.append(batch.arc_virtual, False),
        arc_segment=np.append(batch.arc_segment, SEG1),
        width=None,
    )


def test_assemble_single():
    batch = assemble_single(parse_smiles("CCO"))

    assert batch.num_nodes == 4
    assert batch.num_graphs == 1
    assert batch.collection.tolist() == [3]
    assert batch.segment.tolist() == [SEG1, SEG1, SEG1, SEG_COLLECT]
    assert batch.origin.tolist() == [0, 1, 2, -1]
    # two arcs per bond, one virtual arc per atom into the collection node
    assert batch.num_arcs == 7
    assert batch.arc_virtual.tolist() == [False] * 4 + [True] * 3
    assert batch.arc_target[4:].tolist() == [3, 3, 3]
    assert np.all(batch.arc_features[4:] == 0)
    assert batch.width == 3
    assert batch.neighbor_mask.sum(axis=1).tolist() == [1, 2, 1, 3]
    check_structure(batch)


def test_bonds_become_arc_pairs():
    batch = assemble([(parse_smiles("CO"), SEG1)], VOCAB, collect=False)

    assert batch.arc_source.tolist() == [0, 1]
    assert batch.arc_target.tolist() == [1, 0]
    assert batch.arc_features[0].tolist() == batch.arc_features[1].tolist()
    assert batch.collection.tolist() == [-1]


def test_isolated_atoms_get_self_arcs():
    batch = assemble_single(parse_smiles("C.O"))

    assert batch.num_arcs == 4
    self_arcs = batch.arc_source[:2].tolist(), batch.arc_target[:2].tolist()
    assert self_arcs == ([0, 1], [0, 1])
    assert batch.arc_virtual.all()
    assert batch.neighbor_mask.any(axis=1).all()
    assert batch.self_arcs.sum() == 2
    assert batch.collection_arcs.sum() == 2
    assert not (batch.self_arcs & batch.collection_arcs).any()
    check_structure(batch)


def test_assemble_pair_segments():
    batch = assemble_pair(parse_smiles("CC"), parse_smiles("OCO"))

    assert batch.segment.tolist() == [SEG1, SEG1, SEG2, SEG2, SEG2, SEG_COLLECT]
    assert batch.origin.tolist() == [0, 1, 0, 1, 2, -1]
    real = ~batch.arc_virtual
    assert batch.arc_segment[real].tolist() == [SEG1] * 2 + [SEG2] * 4
    check_structure(batch)


def test_concat():
    a = assemble_single(parse_smiles("CC"))
    b = assemble_single(parse_smiles("CCO"))
    batch = BatchedGraph.concat([a, b])

    assert batch.num_graphs == 2
    assert batch.num_nodes == 7
    assert batch.collection.tolist() == [2, 6]
    assert batch.graph_index.tolist() == [0, 0, 0, 1, 1, 1, 1]
    assert batch.graph_nodes(1).tolist() == [3, 4, 5]
    assert batch.graph_nodes(1, ordinary=False).tolist() == [3, 4, 5, 6]
    check_structure(batch)


def test_without_collection():
    batch = assemble_single(parse_smiles("CCO"))
    bare = batch.without_collection()

    assert bare.num_nodes == 3
    assert bare.num_arcs == 4
    assert bare.width == batch.width
    assert not bare.is_collection.any()
    assert bare.collection.tolist() == [-1]
    assert np.array_equal(bare.neighbor_arcs[:, :2], batch.neighbor_arcs[:3, :2])


def test_width_below_in_degree():
    batch = assemble_single(parse_smiles("CCO"))
    with pytest.raises(StructureError):
        replace(batch, width=2)


def test_arc_between_segments():
    batch = assemble_pair(parse_smiles("CC"), parse_smiles("OO"))
    with pytest.raises(StructureError, match="segments"):
        check_structure(with_extra_arc(batch, 1, 2))


def test_arc_leaving_collection_node():
    batch = assemble_single(parse_smiles("CCO"))
    with pytest.raises(StructureError, match="leaves"):
        check_structure(with_extra_arc(batch, 3, 0))


def test_arc_between_graphs():
    batch = BatchedGraph.concat(
        [assemble_single(parse_smiles("CC")), assemble_single(parse_smiles("CC"))]
    )
    with pytest.raises(StructureError, match="between graphs"):
        check_structure(with_extra_arc(batch, 0, 3))


def test_collection_node_missing_arcs():
    batch = assemble_single(parse_smiles("CCO"))
    keep = np.arange(batch.num_arcs) != batch.num_arcs - 1
    broken = replace(
        batch,
        arc_source=batch.arc_source[keep],
        arc_target=batch.arc_target[keep],
        arc_features=batch.arc_features[keep],
        arc_virtual=batch.arc_virtual[keep],
        arc_segment=batch.arc_segment[keep],
    )
    with pytest.raises(StructureError, match="misses arcs"):
        check_structure(broken)
