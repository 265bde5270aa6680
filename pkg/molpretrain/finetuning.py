# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Downstream fine-tuning with one linear output layer."""

from dataclasses import dataclass, field, replace
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
)

import numpy as np

from . import numcore as nc
from .batch import SEG1, SEG2, BatchedGraph, assemble
from .chem import MolGraph
from .datasets import TASK_KINDS, LabeledDataset
from .exceptions import DegenerateError, UsageError
from .features import FeatureVocab
from .logger import logger
from .metrics import auc_roc, classification_report, mean_over_labels, regression_report
from .molgnet import MolGNetParams, forward, graph_embedding, xavier_uniform
from .numcore import Tape, Tensor
from .optim import AdamState, adam_step, zero_grads


def assemble_single(mol: MolGraph, vocab: Optional[FeatureVocab] = None) -> BatchedGraph:
    """One molecule in segment 1 around a collection node."""
    return assemble([(mol, SEG1)], vocab or FeatureVocab.default())


def assemble_pair(
    a: MolGraph, b: MolGraph, vocab: Optional[FeatureVocab] = None
) -> BatchedGraph:
    """Two molecules in segments 1 and 2, laid out like a stitched fragment pair."""
    return assemble([(a, SEG1), (b, SEG2)], vocab or FeatureVocab.default())


@dataclass
class TaskHead:
    kind: str
    weight: Tensor
    bias: Tensor

    @classmethod
    def initialize(
        cls, kind: str, arity: int, hidden: int, rng: np.random.Generator
    ) -> "TaskHead":
        if kind not in TASK_KINDS:
            raise UsageError(f"unknown task kind {kind!r}")
        if arity < 1:
            raise UsageError("a task head needs at least one output")
        return cls(
            kind,
            Tensor(xavier_uniform(rng, (arity, hidden)), requires_grad=True),
            Tensor(np.zeros(arity), requires_grad=True),
        )

    @property
    def arity(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> Dict[str, Tensor]:
        return {"head.task.W": self.weight, "head.task.b": self.bias}

    def outputs(self, vectors: Tensor) -> Tensor:
        return nc.linear(vectors, self.weight, self.bias)

    def loss(self, outputs: Tensor, labels: np.ndarray) -> Tensor:
        """Cross-entropy (per label) or squared error; missing labels are skipped."""
        labels = np.asarray(labels, dtype=np.float64)
        known = (~np.isnan(labels)).astype(np.float64)
        if not known.any():
            # nothing to fit; a zero that keeps the graph connected
            return nc.mul(nc.sum(outputs), 0.0)
        filled = np.nan_to_num(labels)
        if self.kind == "regression":
            return nc.mse_loss(outputs, filled, known)
        return nc.cross_entropy_logits(outputs, filled, known, kind="binary")

    def predict(self, outputs: np.ndarray) -> np.ndarray:
        if self.kind == "regression":
            return outputs
        return np.exp(-np.logaddexp(0.0, -outputs))


@dataclass
class FinetuneSettings:
    epochs: int = 100
    batch_size: int = 32
    patience: int = 10
    seed: int = 0
    readout: str = "collection"
    optimizer: AdamState = field(default_factory=lambda: AdamState(lr=1e-4))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_score: float


@dataclass
class FinetuneResult:
    params: MolGNetParams
    head: TaskHead
    history: List[EpochRecord]
    best_epoch: int
    test_metrics: Dict[str, float]

    @property
    def best_valid(self) -> float:
        return self.history[self.best_epoch - 1].valid_score

    def epochs_to(self, threshold: float) -> Optional[int]:
        """First epoch whose validation score reaches `threshold`."""
        for record in self.history:
            if record.valid_score >= threshold:
                return record.epoch
        return None


def task_inputs(
    dataset: LabeledDataset, vocab: Optional[FeatureVocab] = None
) -> List[BatchedGraph]:
    """Assembled input graph of every row, pairs dispatched on `partners`."""
    if dataset.is_pair:
        return [
            assemble_pair(a, b, vocab)
            for a, b in zip(dataset.molecules, dataset.partners)
        ]
    return [assemble_single(mol, vocab) for mol in dataset.molecules]


def head_outputs(
    graphs: Sequence[BatchedGraph],
    params: MolGNetParams,
    head: TaskHead,
    readout: str,
) -> Tensor:
    batch = BatchedGraph.concat(graphs)
    states = forward(batch, params).states
    return head.outputs(graph_embedding(batch, states, readout))


def predict(
    graphs: Sequence[BatchedGraph],
    params: MolGNetParams,
    head: TaskHead,
    readout: str = "collection",
    batch_size: int = 64,
) -> np.ndarray:
    chunks = [
        head_outputs(graphs[i : i + batch_size], params, head, readout).data
        for i in range(0, len(graphs), batch_size)
    ]
    return head.predict(np.concatenate(chunks))


def evaluate(kind: str, predictions: np.ndarray, labels: np.ndarray) -> Dict[str, float]:
    if kind == "regression":
        return regression_report(predictions, labels)
    return classification_report(predictions, labels)


def validation_score(kind: str, predictions: np.ndarray, labels: np.ndarray) -> float:
    """Higher is better: mean AUC-ROC, or negated RMSE for regression."""
    if kind == "regression":
        return -regression_report(predictions, labels)["rmse"]
    return mean_over_labels(auc_roc, predictions, labels)


def finetune(
    dataset: LabeledDataset,
    params: MolGNetParams,
    settings: FinetuneSettings,
    vocab: Optional[FeatureVocab] = None,
) -> FinetuneResult:
    """Train a fresh head on top of a copy of `params`.

    Stops after `settings.patience` epochs without validation improvement and
    returns the parameters of the best validation epoch.
    """
    rng = np.random.default_rng(settings.seed)
    params = params.copy()
    head = TaskHead.initialize(dataset.kind, dataset.arity, params.config.hidden, rng)
    named = dict(params.items())
    named.update(head.parameters())

    optimizer = replace(settings.optimizer, step=0, first={}, second={})
    graphs = task_inputs(dataset, vocab)
    train = dataset.split("train")
    valid = dataset.split("valid")
    valid_graphs = [graphs[i] for i in valid]

    history: List[EpochRecord] = []
    best_score, best_epoch, best_arrays = -np.inf, 0, None
    for epoch in range(1, settings.epochs + 1):
        losses = []
        order = rng.permutation(train)
        for start in range(0, len(order), settings.batch_size):
            rows = order[start : start + settings.batch_size]
            if np.isnan(dataset.labels[rows]).all():
                continue
            zero_grads(named)
            with Tape():
                outputs = head_outputs(
                    [graphs[i] for i in rows], params, head, settings.readout
                )
                loss = head.loss(outputs, dataset.labels[rows])
            nc.backward(loss)
            adam_step(named, optimizer)
            losses.append(loss.item())

        predictions = predict(valid_graphs, params, head, settings.readout)
        try:
            score = validation_score(dataset.kind, predictions, dataset.labels[valid])
        except DegenerateError:
            # a single-class validation split ranks nothing; fall back to its loss
            outputs = head_outputs(valid_graphs, params, head, settings.readout)
            score = -head.loss(outputs, dataset.labels[valid]).item()
        train_loss = float(np.mean(losses)) if losses else float("nan")
        history.append(EpochRecord(epoch, train_loss, score))
        logger.debug("epoch %s loss %.4f valid %.4f", epoch, train_loss, score)

        if score > best_score:
            best_score, best_epoch = score, epoch
            best_arrays = {name: t.data.copy() for name, t in named.items()}
        elif epoch - best_epoch >= settings.patience:
            logger.info("stopping early after epoch %s", epoch)
            break

    if best_arrays is not None:
        for name, tensor in named.items():
            tensor.data = best_arrays[name]

    test = dataset.split("test")
    predictions = predict([graphs[i] for i in test], params, head, settings.readout)
    test_metrics = evaluate(dataset.kind, predictions, dataset.labels[test])
    return FinetuneResult(params, head, history, best_epoch, test_metrics)
