# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import numpy as np
import pandas as pd
import pytest

from molpretrain import numcore as nc
from molpretrain.batch import SEG1, SEG2, SEG_COLLECT
from molpretrain.datasets import (
    SINGLE_RATIOS,
    LabeledDataset,
    dataset_from_frame,
    random_split,
    synthetic_task,
)
from molpretrain.exceptions import UsageError
from molpretrain.finetuning import (
    EpochRecord,
    FinetuneResult,
    FinetuneSettings,
    TaskHead,
    assemble_pair,
    finetune,
    predict,
    task_inputs,
    validation_score,
)
from molpretrain.numcore import Tape, Tensor

from .conftest import molecules


@pytest.fixture
def task():
    return dataset_from_frame(synthetic_task(40, seed=0), seed=0)


def test_task_head_initialize():
    head = TaskHead.initialize("multilabel", 3, 8, np.random.default_rng(0))

    assert head.arity == 3
    assert head.weight.shape == (3, 8)
    assert set(head.parameters()) == {"head.task.W", "head.task.b"}

    with pytest.raises(UsageError):
        TaskHead.initialize("ordinal", 1, 8, np.random.default_rng(0))
    with pytest.raises(UsageError):
        TaskHead.initialize("binary", 0, 8, np.random.default_rng(0))


def test_task_head_skips_missing_labels():
    head = TaskHead.initialize("binary", 2, 4, np.random.default_rng(0))
    outputs = Tensor(np.array([[0.0, 3.0], [0.0, -2.0]]))

    loss = head.loss(outputs, np.array([[1.0, np.nan], [0.0, np.nan]]))

    assert loss.item() == pytest.approx(np.log(2.0))


def test_task_head_regression():
    head = TaskHead.initialize("regression", 1, 4, np.random.default_rng(0))
    outputs = np.array([[0.5], [2.0]])

    assert np.array_equal(head.predict(outputs), outputs)
    loss = head.loss(Tensor(outputs), np.array([[1.5], [np.nan]]))
    assert loss.item() == pytest.approx(1.0)


def test_task_head_without_known_labels():
    head = TaskHead.initialize("multilabel", 2, 4, np.random.default_rng(0))
    outputs = Tensor(np.array([[0.5, -1.0]]), requires_grad=True)

    with Tape():
        loss = head.loss(outputs, np.array([[np.nan, np.nan]]))
    nc.backward(loss)

    assert loss.item() == 0.0
    assert np.array_equal(outputs.grad, np.zeros((1, 2)))


def test_predict_probabilities():
    head = TaskHead.initialize("binary", 1, 4, np.random.default_rng(0))
    probs = head.predict(np.array([[0.0], [800.0], [-800.0]]))
    assert probs[:, 0] == pytest.approx([0.5, 1.0, 0.0])


def test_assemble_pair():
    ccn, o = molecules("CCN", "O")
    batch = assemble_pair(ccn, o)

    assert batch.num_nodes == 5
    assert list(batch.segment) == [SEG1, SEG1, SEG1, SEG2, SEG_COLLECT]


def test_task_inputs_dispatch_pairs():
    frame = pd.DataFrame(
        {"smiles": ["CCO", "CN", "CC"], "smiles_2": ["O", "N", "C"], "y": [0, 1, 0]}
    )
    dataset = dataset_from_frame(frame)

    graphs = task_inputs(dataset)

    assert [g.num_nodes for g in graphs] == [5, 4, 4]


def test_validation_score():
    labels = np.array([[1.0], [0.0]])
    assert validation_score("binary", np.array([[0.9], [0.1]]), labels) == 1.0
    assert validation_score("regression", np.array([[2.0], [1.0]]), labels) == -1.0


def test_epochs_to():
    history = [EpochRecord(1, 0.7, 0.6), EpochRecord(2, 0.5, 0.85)]
    result = FinetuneResult(None, None, history, 2, {})

    assert result.epochs_to(0.8) == 2
    assert result.epochs_to(0.9) is None
    assert result.best_valid == 0.85


def test_finetune(task, tiny_params):
    original = {name: t.data.copy() for name, t in tiny_params.items()}
    settings = FinetuneSettings(epochs=3, batch_size=16, patience=5, seed=0)
    settings.optimizer.lr = 1e-3

    result = finetune(task, tiny_params, settings)

    assert [record.epoch for record in result.history] == [1, 2, 3]
    assert 1 <= result.best_epoch <= 3
    assert set(result.test_metrics) == {"auc_roc", "prc_auc", "f1"}
    assert all(np.isfinite(record.train_loss) for record in result.history)
    for name, tensor in tiny_params.items():
        assert np.array_equal(tensor.data, original[name])
    assert any(
        not np.array_equal(tensor.data, original[name])
        for name, tensor in result.params.items()
    )


def test_finetune_is_seeded(task, tiny_params):
    settings = FinetuneSettings(epochs=2, batch_size=16, seed=4)

    first = finetune(task, tiny_params, settings)
    second = finetune(task, tiny_params, settings)

    assert [r.train_loss for r in first.history] == [r.train_loss for r in second.history]


def test_finetune_early_stopping(task, tiny_params):
    settings = FinetuneSettings(epochs=50, batch_size=32, patience=1, seed=0)
    settings.optimizer.lr = 0.0

    result = finetune(task, tiny_params, settings)

    assert len(result.history) == 2
    assert result.best_epoch == 1


def test_finetune_regression(tiny_params):
    frame = synthetic_task(30, seed=2)
    frame["label"] = frame["label"] * 1.5 + 0.25
    dataset = dataset_from_frame(frame, seed=0)
    assert dataset.kind == "regression"

    result = finetune(dataset, tiny_params, FinetuneSettings(epochs=1, seed=0))

    assert set(result.test_metrics) == {"rmse"}
    predictions = predict(
        task_inputs(dataset), result.params, result.head, batch_size=7
    )
    assert predictions.shape == (30, 1)
    assert predictions.dtype == nc.get_default_dtype()


def sparse_dataset(labels):
    mols = molecules(*SMALL_TASK)
    dataset = LabeledDataset(mols, labels, "multilabel", ["a", "b"])
    return dataset.with_splits(random_split(len(mols), SINGLE_RATIOS, seed=0))


SMALL_TASK = ["CCO", "CCN", "OCCO", "NCCN", "CCCO", "CCCN", "OCCCO", "NCCCN", "CO", "CN"]


def test_finetune_sparse_labels(tiny_params):
    labels = np.full((10, 2), np.nan)
    labels[::2, 0] = [1, 0, 1, 0, 1]
    labels[1::3, 1] = [0, 1, 0]
    settings = FinetuneSettings(epochs=2, batch_size=1, seed=0)

    result = finetune(sparse_dataset(labels), tiny_params, settings)

    assert len(result.history) == 2
    assert all(np.isfinite(record.train_loss) for record in result.history)


def test_finetune_without_any_labels(tiny_params):
    settings = FinetuneSettings(epochs=2, batch_size=1, seed=0)

    result = finetune(sparse_dataset(np.full((10, 2), np.nan)), tiny_params, settings)

    assert len(result.history) == 2
    assert np.isnan(result.history[0].train_loss)
    assert all(np.isnan(value) for value in result.test_metrics.values())
    for name, tensor in result.params.items():
        assert np.array_equal(tensor.data, tiny_params[name].data)
