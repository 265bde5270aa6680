# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from typing import Dict, List

import numpy as np

from molpretrain.args import add_common_arguments, positive_int
from molpretrain.checkpoint import (
    load_checkpoint,
    parameter_digest,
    restore_backbone,
    save_checkpoint,
)
from molpretrain.datasets import TASK_KINDS, kfold_splits, load_dataset
from molpretrain.exceptions import UsageError
from molpretrain.finetuning import finetune
from molpretrain.logger import format_metrics, logger
from molpretrain.molgnet import MolGNetParams


def initial_parameters(args, config) -> MolGNetParams:
    if args.no_pretrain:
        logger.info("no pre-training: random initialization")
        return MolGNetParams.initialize(config.model_config(), config.seed)
    if config.checkpoint is None:
        raise UsageError("finetune needs --checkpoint or --no-pretrain")
    return restore_backbone(load_checkpoint(config.checkpoint), config)


def summarize(results: List[Dict[str, float]]) -> Dict[str, tuple]:
    names = results[0].keys()
    return {
        name: (
            float(np.nanmean([r[name] for r in results])),
            float(np.nanstd([r[name] for r in results])),
        )
        for name in names
    }


def run_finetuning(args, config):
    if config.dataset is None:
        raise UsageError("finetune needs --dataset (or paths.dataset in the config)")
    dataset = load_dataset(config.dataset, args.kind, config.seed)
    params = initial_parameters(args, config)
    logger.info("initialization %s", parameter_digest(dict(params.items())))

    if args.folds:
        runs = [
            (config.seed, dataset.with_splits(fold))
            for fold in kfold_splits(len(dataset), args.folds, config.seed)
        ]
    else:
        runs = [(config.seed + r, dataset) for r in range(config.repeats)]

    reports, best = [], None
    for index, (seed, data) in enumerate(runs):
        result = finetune(data, params, config.finetune_settings(seed))
        reports.append(result.test_metrics)
        logger.info(
            "run %s: best epoch %s (valid %.4f), test %s",
            index + 1,
            result.best_epoch,
            result.best_valid,
            format_metrics(result.test_metrics),
        )
        if args.threshold is not None:
            logger.info(
                "run %s: validation reached %s at epoch %s",
                index + 1,
                args.threshold,
                result.epochs_to(args.threshold),
            )
        if best is None or result.best_valid > best.best_valid:
            best = result

    if len(reports) > 1:
        for name, (mean, std) in summarize(reports).items():
            logger.info("%s: %.4f ± %.4f over %s runs", name, mean, std, len(reports))

    if config.out is not None:
        tensors = dict(best.params.items())
        tensors.update(best.head.parameters())
        save_checkpoint(config.out, config, best.best_epoch, tensors)
        logger.info("fine-tuned checkpoint written to %s", config.out)


def add_parser(parser):
    finetune_parser = parser.add_parser(
        "finetune", help="Fine-tune on a labeled dataset with a linear head."
    )
    finetune_parser.add_argument(
        "--dataset", help="CSV with 'smiles' (and 'smiles_2') plus label columns"
    )
    finetune_parser.add_argument(
        "--no-pretrain",
        action="store_true",
        help="start from random parameters instead of the checkpoint",
    )
    finetune_parser.add_argument(
        "--kind", choices=TASK_KINDS, help="task kind (default: inferred from labels)"
    )
    finetune_parser.add_argument("--epochs", type=positive_int, help="maximum epochs")
    finetune_parser.add_argument(
        "--repeats", type=positive_int, help="runs with consecutive seeds"
    )
    finetune_parser.add_argument(
        "--folds", type=positive_int, help="cross-validate over this many folds"
    )
    finetune_parser.add_argument(
        "--threshold",
        type=float,
        help="report the first epoch whose validation score reaches this value",
    )
    finetune_parser.add_argument(
        "--readout", choices=("collection", "mean"), help="graph representation"
    )
    add_common_arguments(finetune_parser)
    finetune_parser.set_defaults(func=run_finetuning)
