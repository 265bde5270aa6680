# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import pandas as pd

from molpretrain.analysis import embed_molecules
from molpretrain.args import add_common_arguments
from molpretrain.checkpoint import load_checkpoint, restore_backbone
from molpretrain.datasets import load_corpus
from molpretrain.exceptions import UsageError
from molpretrain.logger import logger


def write_embeddings(args, config):
    if config.corpus is None or config.out is None:
        raise UsageError("embed needs --corpus and --out")
    params = restore_backbone(load_checkpoint(config.checkpoint), config)
    molecules = load_corpus(config.corpus)
    vectors = embed_molecules(molecules, params, config.readout)

    frame = pd.DataFrame(vectors, columns=[f"e{i}" for i in range(vectors.shape[1])])
    frame.insert(0, "smiles", [mol.source for mol in molecules])
    frame.to_csv(config.out, index=False, float_format="%.17g")
    logger.info("wrote %s embeddings to %s", len(frame), config.out)


def add_parser(parser):
    embed_parser = parser.add_parser(
        "embed", help="Write graph-level embeddings of a corpus."
    )
    embed_parser.add_argument("--corpus", help="SMILES file, one per line")
    embed_parser.add_argument(
        "--readout", choices=("collection", "mean"), help="graph representation"
    )
    add_common_arguments(embed_parser)
    embed_parser.set_defaults(func=write_embeddings)
