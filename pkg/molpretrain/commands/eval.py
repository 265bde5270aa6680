# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import numpy as np

from molpretrain.analysis import PRESENTATIONS, validity_separation_experiment
from molpretrain.args import add_common_arguments
from molpretrain.checkpoint import load_checkpoint, restore_backbone, restore_heads
from molpretrain.datasets import SPLIT_NAMES, TASK_KINDS, load_corpus, load_dataset
from molpretrain.exceptions import CheckpointError, UsageError
from molpretrain.finetuning import TaskHead, evaluate, predict, task_inputs
from molpretrain.logger import format_metrics, logger
from molpretrain.molgnet import MolGNetParams


def task_head(checkpoint, kind: str) -> TaskHead:
    heads = restore_heads(checkpoint)
    if "head.task.W" not in heads or "head.task.b" not in heads:
        raise CheckpointError("checkpoint has no task head; run finetune with --out")
    return TaskHead(kind, heads["head.task.W"], heads["head.task.b"])


def evaluate_task(args, config, checkpoint):
    dataset = load_dataset(config.dataset, args.kind, config.seed)
    params = restore_backbone(checkpoint, config)
    head = task_head(checkpoint, dataset.kind)
    if head.arity != dataset.arity:
        raise CheckpointError(
            f"task head has {head.arity} outputs, dataset has {dataset.arity} labels"
        )

    graphs = task_inputs(dataset)
    rows = np.arange(len(dataset)) if args.split == "all" else dataset.split(args.split)
    predictions = predict([graphs[i] for i in rows], params, head, config.readout)
    metrics = evaluate(dataset.kind, predictions, dataset.labels[rows])
    logger.info("%s rows (%s): %s", len(rows), args.split, format_metrics(metrics))


def evaluate_validity(args, config, checkpoint):
    pretrained = restore_backbone(checkpoint, config)
    untrained = MolGNetParams.initialize(config.model_config(), config.seed)
    untrained_index, pretrained_index = validity_separation_experiment(
        load_corpus(config.corpus),
        untrained,
        pretrained,
        config.seed,
        presentation=args.presentation,
    )
    logger.info("untrained:  %.4f", untrained_index)
    logger.info("pretrained: %.4f", pretrained_index)


def run_evaluation(args, config):
    if config.checkpoint is None:
        raise UsageError("eval needs --checkpoint")
    checkpoint = load_checkpoint(config.checkpoint)
    if args.validity:
        if config.corpus is None:
            raise UsageError("eval --validity needs --corpus")
        evaluate_validity(args, config, checkpoint)
        return
    if config.dataset is None:
        raise UsageError("eval needs --dataset or --validity")
    evaluate_task(args, config, checkpoint)


def add_parser(parser):
    eval_parser = parser.add_parser(
        "eval",
        help="Score a fine-tuned checkpoint, or measure how well embeddings "
        "separate valid from shuffled molecules.",
    )
    eval_parser.add_argument("--dataset", help="labeled CSV to score")
    eval_parser.add_argument(
        "--kind", choices=TASK_KINDS, help="task kind (default: inferred from labels)"
    )
    eval_parser.add_argument(
        "--split",
        choices=("all",) + tuple(SPLIT_NAMES),
        default="all",
        help="rows to score (default: all)",
    )
    eval_parser.add_argument(
        "--validity",
        action="store_true",
        help="report Davies-Bouldin indices of valid vs. shuffled molecules",
    )
    eval_parser.add_argument("--corpus", help="SMILES file for --validity")
    eval_parser.add_argument(
        "--presentation",
        choices=PRESENTATIONS,
        default="pair",
        help="--validity input layout: the molecule cut into two segments "
        "(pair, default) or whole (single)",
    )
    eval_parser.add_argument(
        "--readout", choices=("collection", "mean"), help="graph representation"
    )
    add_common_arguments(eval_parser)
    eval_parser.set_defaults(func=run_evaluation)
