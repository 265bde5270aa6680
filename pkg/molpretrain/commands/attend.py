# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from molpretrain.args import add_common_arguments
from molpretrain.checkpoint import load_checkpoint, restore_backbone
from molpretrain.chem import parse_smiles
from molpretrain.finetuning import assemble_single
from molpretrain.logger import logger
from molpretrain.molgnet import collection_attention_weights, forward


def show_attention(args, config):
    params = restore_backbone(load_checkpoint(config.checkpoint), config)
    graph = parse_smiles(args.smiles)
    batch = assemble_single(graph)
    result = forward(batch, params)

    columns = [("mean", collection_attention_weights(result, batch)[0])]
    if args.per_head:
        columns += [
            (f"head{k}", collection_attention_weights(result, batch, head=k)[0])
            for k in range(params.config.heads)
        ]

    logger.info("atom element " + " ".join(name for name, _ in columns))
    for index, node in enumerate(batch.graph_nodes(0)):
        atom = graph.atoms[batch.origin[node]]
        values = " ".join(f"{weights[index]:.6f}" for _, weights in columns)
        logger.info(f"{index:>4} {atom.element:<7} {values}")


def add_parser(parser):
    attend_parser = parser.add_parser(
        "attend", help="Show the collection node's attention over the atoms."
    )
    attend_parser.add_argument("smiles", help="molecule to inspect")
    attend_parser.add_argument(
        "--per-head", action="store_true", help="also show every attention head"
    )
    add_common_arguments(attend_parser)
    attend_parser.set_defaults(func=show_attention)
