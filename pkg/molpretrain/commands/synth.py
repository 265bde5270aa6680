# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from pathlib import Path

from molpretrain.args import add_common_arguments, positive_int
from molpretrain.datasets import synthetic_corpus, synthetic_task
from molpretrain.exceptions import UsageError
from molpretrain.logger import logger


def synth(args, config):
    if config.out is None:
        raise UsageError("synth needs --out")

    if args.task:
        frame = synthetic_task(args.molecules, config.seed)
        frame.to_csv(config.out, index=False)
    else:
        lines = synthetic_corpus(args.molecules, config.seed)
        Path(config.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %s molecules to %s", args.molecules, config.out)


def add_parser(parser):
    synth_parser = parser.add_parser(
        "synth",
        help="Write a synthetic two-family corpus or labeled task.",
    )
    synth_parser.add_argument(
        "--molecules",
        type=positive_int,
        default=200,
        help="number of molecules (default: 200)",
    )
    synth_parser.add_argument(
        "--task",
        action="store_true",
        help="write a labeled CSV (smiles,label) instead of a SMILES corpus",
    )
    add_common_arguments(synth_parser)
    synth_parser.set_defaults(func=synth)
