# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Corpus and labeled dataset ingestion, splits and synthetic data."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from .chem import MolGraph, parse_smiles
from .exceptions import DataError, MissingInputError, UsageError
from .logger import logger

TASK_KINDS = ("binary", "multilabel", "regression")
SINGLE_RATIOS = (0.8, 0.1, 0.1)
PAIR_RATIOS = (0.7, 0.1, 0.2)
SPLIT_NAMES = ("train", "valid", "test")


def _existing(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(path)
    return path


def read_smiles_lines(path) -> List[str]:
    """One SMILES per line; anything after whitespace is ignored.

    A leading ``smiles`` header line is skipped.
    """
    lines = []
    for line in _existing(path).read_text(encoding="utf-8").splitlines():
        token = line.split()[0] if line.split() else ""
        if token:
            lines.append(token)
    if lines and lines[0].lower() == "smiles":
        lines = lines[1:]
    return lines


def parse_corpus(
    smiles: Sequence[str], strict: bool = False
) -> Tuple[List[MolGraph], List[str]]:
    """Parse every string, returning graphs and the strings that failed.

    With `strict`, the first failure is raised instead.
    """
    graphs, failed = [], []
    for text in smiles:
        try:
            graphs.append(parse_smiles(text))
        except DataError as e:
            if strict:
                raise
            logger.debug("skipping %s: %s", text, e)
            failed.append(text)
    if failed:
        logger.warning("skipped %s unparseable molecules", len(failed))
    return graphs, failed


def load_corpus(path, strict: bool = False) -> List[MolGraph]:
    return parse_corpus(read_smiles_lines(path), strict=strict)[0]


@dataclass
class LabeledDataset:
    molecules: List[MolGraph]
    labels: np.ndarray
    kind: str
    label_names: List[str]
    # present for molecule-pair datasets
    partners: Optional[List[MolGraph]] = None
    splits: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise UsageError(f"unknown task kind {self.kind!r}")
        if self.labels.ndim != 2 or len(self.labels) != len(self.molecules):
            raise DataError("labels must have one row per molecule")
        if self.partners is not None and len(self.partners) != len(self.molecules):
            raise DataError("every molecule needs a partner")

    def __len__(self) -> int:
        return len(self.molecules)

    @property
    def is_pair(self) -> bool:
        return self.partners is not None

    @property
    def arity(self) -> int:
        return self.labels.shape[1]

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise DataError(f"dataset has no {name} split")
        return self.splits[name]

    def with_splits(self, splits: Dict[str, np.ndarray]) -> "LabeledDataset":
        check_splits(splits, len(self))
        return LabeledDataset(
            self.molecules,
            self.labels,
            self.kind,
            self.label_names,
            self.partners,
            splits,
        )


def infer_kind(labels: np.ndarray) -> str:
    known = labels[~np.isnan(labels)]
    if known.size and np.all((known == 0) | (known == 1)):
        return "binary" if labels.shape[1] == 1 else "multilabel"
    return "regression"


def random_split(
    n: int, ratios: Sequence[float], seed: int = 0
) -> Dict[str, np.ndarray]:
    """Seeded random train/valid/test index split with the given ratios."""
    if n < len(SPLIT_NAMES):
        raise DataError(f"cannot split {n} rows three ways")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(ratios[0] * n)))
    n_valid = max(1, int(round(ratios[1] * n)))
    n_train = min(n_train, n - n_valid - 1)
    return {
        "train": np.sort(order[:n_train]),
        "valid": np.sort(order[n_train : n_train + n_valid]),
        "test": np.sort(order[n_train + n_valid :]),
    }


def kfold_splits(n: int, k: int, seed: int = 0) -> List[Dict[str, np.ndarray]]:
    """Cross-validation folds; each fold's remainder is cut 7:1 into train/valid."""
    if k < 2 or n < 2 * k:
        raise DataError(f"cannot cut {n} rows into {k} folds")
    folds = []
    kfold = KFold(n_splits=k, shuffle=True, random_state=seed)
    for fold, (rest, test) in enumerate(kfold.split(np.arange(n))):
        rest = np.random.default_rng([seed, fold]).permutation(rest)
        n_valid = max(1, len(rest) // 8)
        folds.append(
            {
                "train": np.sort(rest[n_valid:]),
                "valid": np.sort(rest[:n_valid]),
                "test": np.sort(test),
            }
        )
    return folds


def check_splits(splits: Dict[str, np.ndarray], n: int):
    missing = [name for name in SPLIT_NAMES if name not in splits]
    if missing:
        raise DataError(f"missing splits: {', '.join(missing)}")
    joined = np.concatenate([splits[name] for name in SPLIT_NAMES])
    if len(joined) != n or not np.array_equal(np.sort(joined), np.arange(n)):
        raise DataError("splits must be disjoint and cover every row")


def dataset_from_frame(
    frame: pd.DataFrame, kind: Optional[str] = None, seed: int = 0
) -> LabeledDataset:
    """Build a dataset from a ``smiles`` (and optional ``smiles_2``) frame.

    All other columns are labels; empty cells are missing labels.
    """
    if "smiles" not in frame.columns:
        raise DataError("dataset needs a 'smiles' column")
    label_names = [c for c in frame.columns if c not in ("smiles", "smiles_2")]
    if not label_names:
        raise DataError("dataset has no label columns")
    try:
        labels = frame[label_names].apply(pd.to_numeric).to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DataError(f"non-numeric label: {e}")

    molecules = [parse_smiles(str(s)) for s in frame["smiles"]]
    partners = None
    if "smiles_2" in frame.columns:
        partners = [parse_smiles(str(s)) for s in frame["smiles_2"]]

    kind = kind or infer_kind(labels)
    ratios = PAIR_RATIOS if partners is not None else SINGLE_RATIOS
    dataset = LabeledDataset(molecules, labels, kind, label_names, partners)
    return dataset.with_splits(random_split(len(dataset), ratios, seed))


def load_dataset(path, kind: Optional[str] = None, seed: int = 0) -> LabeledDataset:
    frame = pd.read_csv(_existing(path), sep=None, engine="python", dtype={"smiles": str})
    dataset = dataset_from_frame(frame, kind, seed)
    logger.info(
        "loaded %s %s rows (%s), random split (not scaffold)",
        len(dataset),
        dataset.kind,
        "pairs" if dataset.is_pair else "molecules",
    )
    return dataset


# Synthetic data for desk-scale experiments.
#
# Two structurally disjoint families: saturated chains and para-substituted
# benzene chains.  A molecule starts with a start group and ends with its
# fixed partner end group; start and end groups never overlap, so the first
# half of a molecule always holds a start group and the second half the
# matching end group.

END_GROUPS = {"O": "F", "N": "Cl", "S": "Br", "P": "I"}
START_GROUPS = tuple(END_GROUPS)
DONORS = frozenset(("O", "N"))


def chain_smiles(length: int, start: str) -> str:
    return f"{start}{'C' * length}{END_GROUPS[start]}"


def aromatic_smiles(rings: int, start: str) -> str:
    body = "-".join(["c1ccc(cc1)"] * rings)
    return f"{start}{body}{END_GROUPS[start]}"


def synthetic_molecule(rng: np.random.Generator) -> Tuple[str, str, str]:
    """Draw ``(smiles, family, start group)``."""
    start = START_GROUPS[int(rng.integers(len(START_GROUPS)))]
    if rng.random() < 0.5:
        return chain_smiles(int(rng.integers(2, 9)), start), "chain", start
    return aromatic_smiles(int(rng.integers(1, 3)), start), "aromatic", start


def synthetic_corpus(n: int, seed: int = 0) -> List[str]:
    rng = np.random.default_rng(seed)
    return [synthetic_molecule(rng)[0] for _ in range(n)]


def synthetic_task(n: int, seed: int = 0) -> pd.DataFrame:
    """Separable binary task: does the molecule start with a donor (O or N)?"""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        smiles, _, start = synthetic_molecule(rng)
        rows.append({"smiles": smiles, "label": int(start in DONORS)})
    return pd.DataFrame(rows, columns=["smiles", "label"])
