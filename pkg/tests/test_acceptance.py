# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Desk-scale training runs on the synthetic data; run with ``pytest -m acceptance``."""

import math

import numpy as np
import pytest

from molpretrain.analysis import validity_separation_experiment
from molpretrain.datasets import (
    dataset_from_frame,
    parse_corpus,
    synthetic_corpus,
    synthetic_task,
)
from molpretrain.finetuning import FinetuneSettings, finetune
from molpretrain.molgnet import MolGNetConfig, MolGNetParams
from molpretrain.optim import AdamState
from molpretrain.pretraining import (
    PretrainModel,
    PretrainSettings,
    evaluate_pretraining,
    pretrain,
)

pytestmark = pytest.mark.acceptance

DESK = MolGNetConfig(n_layers=3, steps_per_layer=2, hidden=64, heads=4)
SEED = 7
SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def pretrained():
    corpus = parse_corpus(synthetic_corpus(200, seed=SEED))[0]
    order = np.random.default_rng(SEED).permutation(len(corpus))
    holdout = [corpus[i] for i in order[:20]]
    train = [corpus[i] for i in order[20:]]
    model = PretrainModel.initialize(DESK, seed=SEED)
    settings = PretrainSettings(
        steps=300,
        batch_size=32,
        checkpoint_every=0,
        holdout_fraction=0.0,
        seed=SEED,
    )
    history = pretrain(train, model, settings)
    return model, history, holdout, settings


def test_pretraining_learns_both_tasks(pretrained):
    model, history, holdout, settings = pretrained

    early = np.mean([m.psd_loss + m.mask_loss for m in history[:20]])
    late = np.mean([m.psd_loss + m.mask_loss for m in history[-20:]])
    assert len(history) == 300
    assert late < early

    scored = evaluate_pretraining(
        holdout, model, settings, np.random.default_rng(SEED), rounds=10
    )
    assert scored.psd_acc >= 0.85
    assert scored.mask_acc >= 0.60


@pytest.mark.parametrize("seed", SEEDS)
def test_pretraining_separates_shuffled_molecules(pretrained, seed):
    model = pretrained[0]
    corpus = parse_corpus(synthetic_corpus(100, seed=100 + seed))[0]

    untrained, trained = validity_separation_experiment(
        corpus, MolGNetParams.initialize(DESK, seed=seed), model.params, seed=seed
    )

    assert trained < untrained


def median_epochs(results, threshold=0.9):
    reached = [result.epochs_to(threshold) for result in results]
    return float(np.median([math.inf if e is None else e for e in reached]))


def test_pretrained_initialization_converges_sooner(pretrained):
    model = pretrained[0]

    from_pretrained, from_scratch = [], []
    for seed in SEEDS:
        dataset = dataset_from_frame(synthetic_task(300, seed=20 + seed), seed=seed)
        settings = FinetuneSettings(
            epochs=20,
            batch_size=16,
            patience=20,
            seed=seed,
            optimizer=AdamState(lr=1e-3),
        )
        from_pretrained.append(finetune(dataset, model.params, settings))
        from_scratch.append(
            finetune(dataset, MolGNetParams.initialize(DESK, seed=seed), settings)
        )

    pretrained_median = median_epochs(from_pretrained)
    assert math.isfinite(pretrained_median)
    assert pretrained_median < median_epochs(from_scratch)
