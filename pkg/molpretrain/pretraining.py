# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Self-supervised objectives: pairwise subgraph discrimination and masking.

A molecule is cut into a left and a right fragment at a random border atom.
Half of the time the right fragment is swapped for one cut from another
molecule.  Both fragments are stitched into one graph around a collection
node whose final state has to tell the two cases apart, while a share of the
atoms have their element hidden and must be recovered.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import (
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import numcore as nc
from .batch import SEG1, SEG2, BatchedGraph, assemble
from .chem import MASK, MolGraph
from .exceptions import (
    ConfigError,
    DataError,
    EmptyMaskError,
    ShapeError,
    StructureError,
    TooSmallError,
)
from .features import ELEMENT_INDEX, FeatureVocab
from .logger import logger
from .molgnet import (
    MolGNetConfig,
    MolGNetParams,
    collection_embedding,
    forward,
    xavier_uniform,
)
from .numcore import Tape, Tensor
from .optim import AdamState, adam_step, zero_grads


@dataclass(frozen=True)
class Fragment:
    graph: MolGraph
    # corpus index of the molecule the fragment was cut from
    source: int
    atoms: Tuple[int, ...]


@dataclass(frozen=True)
class SubgraphPair:
    left: Fragment
    right: Fragment
    label: int


@dataclass
class PretrainSample:
    batch: BatchedGraph
    psd_label: int
    masked_positions: np.ndarray
    masked_targets: np.ndarray


def border_range(n: int) -> Tuple[int, int]:
    """Inclusive range the border atom index is drawn from."""
    return math.ceil(n / 3), (2 * n) // 3


def decompose(
    graph: MolGraph, rng: np.random.Generator, source: int = -1
) -> Tuple[Fragment, Fragment]:
    """Cut `graph` at a random border index; bonds across the border are lost."""
    n = graph.num_atoms
    if n < 3:
        raise TooSmallError(f"cannot decompose a molecule of {n} atoms")
    low, high = border_range(n)
    border = int(rng.integers(low, high + 1))
    left = tuple(range(border))
    right = tuple(range(border, n))
    return (
        Fragment(graph.induced_subgraph(left), source, left),
        Fragment(graph.induced_subgraph(right), source, right),
    )


def make_psd_sample(
    corpus: Sequence[MolGraph],
    index: int,
    rng: np.random.Generator,
    negative: Optional[bool] = None,
) -> SubgraphPair:
    """Decompose molecule `index`; with probability 0.5 replace its right side.

    The replacement is one side, chosen uniformly, of another uniformly drawn
    molecule.  `negative` forces the branch.
    """
    if len(corpus) < 2:
        raise TooSmallError("subgraph discrimination needs at least two molecules")
    left, right = decompose(corpus[index], rng, index)
    if negative is None:
        negative = bool(rng.random() < 0.5)
    if not negative:
        return SubgraphPair(left, right, 1)

    other = int(rng.integers(len(corpus) - 1))
    if other >= index:
        other += 1
    sides = decompose(corpus[other], rng, other)
    return SubgraphPair(left, sides[int(rng.integers(2))], 0)


def stitch(pair: SubgraphPair, vocab: Optional[FeatureVocab] = None) -> BatchedGraph:
    if not pair.left.graph.num_atoms or not pair.right.graph.num_atoms:
        raise StructureError("cannot stitch an empty fragment")
    return assemble(
        [(pair.left.graph, SEG1), (pair.right.graph, SEG2)],
        vocab or FeatureVocab.default(),
        collect=True,
        origins=[pair.left.atoms, pair.right.atoms],
    )


def mask_count(mask_rate: float, n_atoms: int) -> int:
    # round first so that 0.15 * 20 counts as 3, not 4
    return max(1, math.ceil(round(mask_rate * n_atoms, 9)))


def apply_attr_mask(
    batch: BatchedGraph,
    mask_rate: float,
    rng: np.random.Generator,
    vocab: Optional[FeatureVocab] = None,
) -> Tuple[BatchedGraph, np.ndarray, np.ndarray]:
    """Hide the element of some ordinary atoms in every graph of `batch`.

    Returns the masked batch, the node positions and their original element
    class ids.
    """
    if not 0.0 < mask_rate < 1.0:
        raise ConfigError(f"pretrain.mask_rate must lie in (0, 1), got {mask_rate}")
    vocab = vocab or FeatureVocab.default()
    offset = vocab.element_offset()

    chosen = []
    for graph in range(batch.num_graphs):
        nodes = batch.graph_nodes(graph)
        picked = rng.choice(nodes, size=mask_count(mask_rate, len(nodes)), replace=False)
        chosen.append(np.sort(picked))
    positions = np.concatenate(chosen).astype(np.int64)

    features = batch.atom_features.copy()
    targets = features[positions, 0] - offset
    features[positions, 0] = offset + ELEMENT_INDEX[MASK]
    return batch.with_atom_features(features), positions, targets


def make_pretrain_sample(
    corpus: Sequence[MolGraph],
    index: int,
    rng: np.random.Generator,
    mask_rate: float = 0.15,
    vocab: Optional[FeatureVocab] = None,
) -> PretrainSample:
    pair = make_psd_sample(corpus, index, rng)
    batch, positions, targets = apply_attr_mask(stitch(pair, vocab), mask_rate, rng, vocab)
    return PretrainSample(batch, pair.label, positions, targets)


# Heads and losses


def init_psd_head(hidden: int, rng: np.random.Generator) -> Dict[str, Tensor]:
    """Feed-forward map d -> d (GELU) -> 1 logit."""
    return {
        "head.psd.W_1": Tensor(xavier_uniform(rng, (hidden, hidden)), requires_grad=True),
        "head.psd.b_1": Tensor(np.zeros(hidden), requires_grad=True),
        "head.psd.W_2": Tensor(xavier_uniform(rng, (1, hidden)), requires_grad=True),
        "head.psd.b_2": Tensor(np.zeros(1), requires_grad=True),
    }


def init_mask_head(
    hidden: int, classes: int, rng: np.random.Generator
) -> Dict[str, Tensor]:
    return {
        "head.mask.W": Tensor(xavier_uniform(rng, (classes, hidden)), requires_grad=True),
        "head.mask.b": Tensor(np.zeros(classes), requires_grad=True),
    }


def psd_logits(vectors: Tensor, head: Dict[str, Tensor]) -> Tensor:
    inner = nc.gelu(nc.linear(vectors, head["head.psd.W_1"], head["head.psd.b_1"]))
    logits = nc.linear(inner, head["head.psd.W_2"], head["head.psd.b_2"])
    return nc.reshape(logits, (vectors.shape[0],))


def sigmoid_probabilities(logits: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -logits))


def psd_loss_from_logits(logits: Tensor, labels: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    labels = np.asarray(labels)
    if labels.shape != logits.shape:
        raise ShapeError(f"labels {labels.shape} do not fit logits {logits.shape}")
    loss = nc.cross_entropy_logits(logits, labels, kind="binary")
    return loss, sigmoid_probabilities(logits.data)


def psd_loss(
    vectors: Tensor, labels: np.ndarray, head: Dict[str, Tensor]
) -> Tuple[Tensor, np.ndarray]:
    """Binary cross-entropy of the homologous/non-homologous decision."""
    return psd_loss_from_logits(psd_logits(vectors, head), labels)


def mask_loss_from_logits(logits: Tensor, targets: np.ndarray) -> Tuple[Tensor, float]:
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise EmptyMaskError("no masked positions to predict")
    loss = nc.cross_entropy_logits(logits, targets, kind="categorical")
    accuracy = float(np.mean(np.argmax(logits.data, axis=-1) == targets))
    return loss, accuracy


def mask_loss(
    states: Tensor, targets: np.ndarray, head: Dict[str, Tensor]
) -> Tuple[Tensor, float]:
    """Mean cross-entropy of the element class at masked positions."""
    if states.shape[0] == 0:
        raise EmptyMaskError("no masked positions to predict")
    logits = nc.linear(states, head["head.mask.W"], head["head.mask.b"])
    return mask_loss_from_logits(logits, targets)


# Training


@dataclass
class PretrainModel:
    params: MolGNetParams
    heads: Dict[str, Tensor]

    @classmethod
    def initialize(
        cls, config: MolGNetConfig, seed: int = 0, vocab: Optional[FeatureVocab] = None
    ) -> "PretrainModel":
        vocab = vocab or FeatureVocab.default()
        params = MolGNetParams.initialize(config, seed)
        rng = np.random.default_rng([seed, 1])
        heads = init_psd_head(config.hidden, rng)
        heads.update(init_mask_head(config.hidden, vocab.num_elements, rng))
        return cls(params, heads)

    def parameters(self) -> Dict[str, Tensor]:
        named = dict(self.params.items())
        named.update(self.heads)
        return named


@dataclass
class StepMetrics:
    step: int
    psd_loss: float
    mask_loss: float
    psd_acc: float
    mask_acc: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def pretrain_losses(
    samples: Sequence[PretrainSample], model: PretrainModel, mask_weight: float = 1.0
) -> Tuple[Tensor, StepMetrics]:
    """Joint loss ``psd + mask_weight * mask`` over a batch of samples."""
    if not samples:
        raise DataError("empty pre-training batch")
    batch = BatchedGraph.concat([s.batch for s in samples])
    offsets = np.cumsum([0] + [s.batch.num_nodes for s in samples])[:-1]
    positions = np.concatenate(
        [s.masked_positions + off for s, off in zip(samples, offsets)]
    )
    targets = np.concatenate([s.masked_targets for s in samples])
    labels = np.array([s.psd_label for s in samples])

    states = forward(batch, model.params).states
    psd, probs = psd_loss(collection_embedding(batch, states), labels, model.heads)
    masked, mask_acc = mask_loss(nc.gather_rows(states, positions), targets, model.heads)
    total = nc.add(psd, nc.mul(masked, mask_weight))

    metrics = StepMetrics(
        step=0,
        psd_loss=psd.item(),
        mask_loss=masked.item(),
        psd_acc=float(np.mean((probs >= 0.5) == (labels == 1))),
        mask_acc=mask_acc,
    )
    return total, metrics


def joint_pretrain_step(
    samples: Sequence[PretrainSample],
    model: PretrainModel,
    optimizer: AdamState,
    mask_weight: float = 1.0,
) -> StepMetrics:
    params = model.parameters()
    zero_grads(params)
    with Tape():
        total, metrics = pretrain_losses(samples, model, mask_weight)
    nc.backward(total)
    adam_step(params, optimizer)
    metrics.step = optimizer.step
    return metrics


class MetricsLog:
    """Newline-delimited JSON stream of per-step metrics."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = self.path.open("w", encoding="utf-8")

    def write(self, record: Dict[str, object]):
        self._file.write(json.dumps(record, sort_keys=True) + "\n")
        self._file.flush()

    def close(self):
        self._file.close()

    def __enter__(self) -> "MetricsLog":
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_metrics(path: Path) -> List[Dict[str, object]]:
    with Path(path).open(encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class PretrainSettings:
    steps: int = 1000
    batch_size: int = 32
    mask_rate: float = 0.15
    mask_weight: float = 1.0
    checkpoint_every: int = 100
    holdout_fraction: float = 0.1
    seed: int = 0
    optimizer: AdamState = field(default_factory=AdamState)


def decomposable(corpus: Sequence[MolGraph]) -> List[MolGraph]:
    kept = [graph for graph in corpus if graph.num_atoms >= 3]
    if len(kept) < len(corpus):
        logger.debug(
            "skipping %s molecules with fewer than 3 atoms", len(corpus) - len(kept)
        )
    return kept


def evaluate_pretraining(
    molecules: Sequence[MolGraph],
    model: PretrainModel,
    settings: PretrainSettings,
    rng: np.random.Generator,
    rounds: int = 1,
) -> StepMetrics:
    """Score both objectives on `molecules` without updating anything.

    Every round draws a fresh decomposition, negative and mask per molecule;
    the accuracies and losses are averaged over rounds.
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be at least 1, got {rounds}")
    scored = []
    for _ in range(rounds):
        samples = [
            make_pretrain_sample(molecules, i, rng, settings.mask_rate)
            for i in range(len(molecules))
        ]
        scored.append(pretrain_losses(samples, model, settings.mask_weight)[1])
    return StepMetrics(
        step=0,
        psd_loss=float(np.mean([m.psd_loss for m in scored])),
        mask_loss=float(np.mean([m.mask_loss for m in scored])),
        psd_acc=float(np.mean([m.psd_acc for m in scored])),
        mask_acc=float(np.mean([m.mask_acc for m in scored])),
    )


def pretrain(
    corpus: Sequence[MolGraph],
    model: PretrainModel,
    settings: PretrainSettings,
    metrics_log: Optional[MetricsLog] = None,
    on_checkpoint: Optional[Callable[[int, PretrainModel], None]] = None,
) -> List[StepMetrics]:
    """Run the joint objective for `settings.steps` optimizer steps.

    A held-out share of the corpus is scored at every checkpoint; negatives
    for it are drawn from the held-out molecules only.
    """
    rng = np.random.default_rng(settings.seed)
    molecules = decomposable(corpus)
    order = rng.permutation(len(molecules))
    n_holdout = int(round(settings.holdout_fraction * len(molecules)))
    if n_holdout < 2:
        n_holdout = 0
    train = [molecules[i] for i in order[n_holdout:]]
    holdout = [molecules[i] for i in order[:n_holdout]]
    if len(train) < 2:
        raise TooSmallError(
            f"pre-training needs at least two molecules of 3+ atoms, got {len(train)}"
        )
    logger.info(
        "pre-training on %s molecules (%s held out) for %s steps",
        len(train),
        len(holdout),
        settings.steps,
    )

    history = []
    for _ in range(settings.steps):
        picks = rng.integers(len(train), size=settings.batch_size)
        samples = [
            make_pretrain_sample(train, int(i), rng, settings.mask_rate) for i in picks
        ]
        metrics = joint_pretrain_step(
            samples, model, settings.optimizer, settings.mask_weight
        )
        history.append(metrics)
        if metrics_log is not None:
            metrics_log.write(metrics.as_dict())
        logger.debug(
            "step %s psd_loss %.4f mask_loss %.4f",
            metrics.step,
            metrics.psd_loss,
            metrics.mask_loss,
        )

        if settings.checkpoint_every and metrics.step % settings.checkpoint_every == 0:
            if holdout:
                scored = evaluate_pretraining(holdout, model, settings, rng)
                logger.info(
                    "step %s held-out psd_acc %.3f mask_acc %.3f",
                    metrics.step,
                    scored.psd_acc,
                    scored.mask_acc,
                )
            if on_checkpoint is not None:
                on_checkpoint(metrics.step, model)
    return history
