# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from contextlib import nullcontext

from molpretrain.args import add_common_arguments, non_negative_int, positive_int
from molpretrain.checkpoint import parameter_digest, save_checkpoint
from molpretrain.datasets import load_corpus
from molpretrain.exceptions import UsageError
from molpretrain.logger import format_metrics, logger
from molpretrain.pretraining import MetricsLog, PretrainModel, pretrain


def run_pretraining(args, config):
    if config.corpus is None:
        raise UsageError("pretrain needs --corpus (or paths.corpus in the config)")
    if config.checkpoint is None:
        raise UsageError("pretrain needs --checkpoint (or paths.checkpoint)")
    corpus = load_corpus(config.corpus)
    model = PretrainModel.initialize(config.model_config(), config.seed)
    logger.info("initialization %s", parameter_digest(model.parameters()))

    def on_checkpoint(step, model):
        save_checkpoint(config.checkpoint, config, step, model.parameters())

    settings = config.pretrain_settings()
    with MetricsLog(config.log) if config.log else nullcontext() as log:
        history = pretrain(corpus, model, settings, log, on_checkpoint)

    step = history[-1].step if history else 0
    save_checkpoint(config.checkpoint, config, step, model.parameters())
    if history:
        last = history[-1].as_dict()
        logger.info("step %s: %s", last.pop("step"), format_metrics(last))
    logger.info("checkpoint written to %s", config.checkpoint)


def add_parser(parser):
    pretrain_parser = parser.add_parser(
        "pretrain",
        help="Pre-train with subgraph discrimination and attribute masking.",
    )
    pretrain_parser.add_argument("--corpus", help="SMILES file, one per line")
    pretrain_parser.add_argument(
        "--steps", type=non_negative_int, help="optimizer steps"
    )
    pretrain_parser.add_argument(
        "--batch-size", dest="batch_size", type=positive_int, help="samples per step"
    )
    pretrain_parser.add_argument("--log", help="metrics stream (JSON lines)")
    add_common_arguments(pretrain_parser)
    pretrain_parser.set_defaults(func=run_pretraining)
