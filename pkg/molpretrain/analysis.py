# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Embedding analyses: graph vectors of a corpus and the validity separation run.

The validity run embeds every molecule next to a copy whose atom records were
shuffled over the same bond topology, then scores how well the two groups
cluster apart (Davies-Bouldin, lower is better) under untrained and under
pre-trained parameters.

With the default ``pair`` presentation a molecule is shown the way
pre-training shows it: cut at its middle atom index into two segments around
one collection node.  ``single`` presents the whole molecule in segment 1, as
fine-tuning does.
"""

from typing import (
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .batch import BatchedGraph
from .chem import MolGraph, shuffle_atom_features
from .exceptions import TooSmallError, UsageError
from .features import FeatureVocab
from .finetuning import assemble_single
from .logger import logger
from .metrics import davies_bouldin
from .molgnet import MolGNetParams, forward, graph_embedding
from .pretraining import Fragment, SubgraphPair, border_range, stitch

MIN_VALIDITY_CORPUS = 100
PRESENTATIONS = ("pair", "single")


def middle_split(mol: MolGraph) -> SubgraphPair:
    """Cut `mol` at ``n // 2``, kept inside the pre-training border range."""
    n = mol.num_atoms
    if n < 3:
        raise TooSmallError(f"cannot split a molecule of {n} atoms")
    low, high = border_range(n)
    border = min(max(n // 2, low), high)
    left, right = tuple(range(border)), tuple(range(border, n))
    return SubgraphPair(
        Fragment(mol.induced_subgraph(left), -1, left),
        Fragment(mol.induced_subgraph(right), -1, right),
        1,
    )


def present(
    mol: MolGraph, presentation: str, vocab: Optional[FeatureVocab] = None
) -> BatchedGraph:
    if presentation == "pair":
        return stitch(middle_split(mol), vocab)
    if presentation == "single":
        return assemble_single(mol, vocab)
    raise UsageError(f"unknown presentation {presentation!r}")


def embed_molecules(
    molecules: Sequence[MolGraph],
    params: MolGNetParams,
    readout: str = "collection",
    batch_size: int = 64,
    vocab: Optional[FeatureVocab] = None,
    presentation: str = "single",
) -> np.ndarray:
    """Graph-level embedding of every molecule, shape (molecules, hidden)."""
    rows = []
    for start in range(0, len(molecules), batch_size):
        batch = BatchedGraph.concat(
            [
                present(mol, presentation, vocab)
                for mol in molecules[start : start + batch_size]
            ]
        )
        states = forward(batch, params).states
        rows.append(graph_embedding(batch, states, readout).data)
    if not rows:
        return np.zeros((0, params.config.hidden))
    return np.concatenate(rows)


def shuffled_copies(molecules: Sequence[MolGraph], seed: int = 0) -> List[MolGraph]:
    """Structurally invalid counterparts: atom features shuffled over the topology."""
    rng = np.random.default_rng(seed)
    return [shuffle_atom_features(mol, rng) for mol in molecules]


def validity_separation_experiment(
    corpus: Sequence[MolGraph],
    untrained: MolGNetParams,
    pretrained: MolGNetParams,
    seed: int = 0,
    min_size: int = MIN_VALIDITY_CORPUS,
    presentation: str = "pair",
) -> Tuple[float, float]:
    """Davies-Bouldin index of valid vs. shuffled molecules under both parameter sets.

    Returns ``(untrained_index, pretrained_index)``; lower means the two
    groups are better separated.  The pair presentation skips molecules of
    fewer than 3 atoms.
    """
    if presentation not in PRESENTATIONS:
        raise UsageError(f"unknown presentation {presentation!r}")
    valid = list(corpus)
    if presentation == "pair":
        valid = [mol for mol in corpus if mol.num_atoms >= 3]
        if len(valid) < len(corpus):
            logger.debug(
                "skipping %s molecules with fewer than 3 atoms", len(corpus) - len(valid)
            )
    if len(valid) < min_size:
        raise TooSmallError(
            f"validity separation needs {min_size} molecules, got {len(valid)}"
        )
    molecules = valid + shuffled_copies(valid, seed)
    groups = np.repeat([0, 1], len(valid))

    indices = []
    for params in (untrained, pretrained):
        vectors = embed_molecules(molecules, params, presentation=presentation)
        indices.append(davies_bouldin(vectors, groups))
    logger.info("Davies-Bouldin untrained %.4f, pretrained %.4f", *indices)
    return indices[0], indices[1]
