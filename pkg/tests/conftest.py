# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import sys

import numpy as np
import pytest

from molpretrain import environment, logger
from molpretrain import numcore as nc
from molpretrain.chem import AtomRecord, BondOrder, BondRecord, MolGraph, parse_smiles
from molpretrain.config import RunConfig
from molpretrain.molgnet import MolGNetConfig, MolGNetParams
from molpretrain.pretraining import PretrainModel

environment.HAS_ANSI = False

TINY_MODEL = """
[model]
n_layers = 1
steps_per_layer = 2
hidden = 8
heads = 2
ffn = 16
"""

SMALL_CORPUS = [
    "CCO",
    "CCCO",
    "OCCO",
    "CC(=O)O",
    "c1ccccc1O",
    "CCN",
    "NCCCN",
    "ClCCCl",
    "CC(C)C",
    "c1ccncc1",
]


def molecules(*smiles):
    return [parse_smiles(s) for s in smiles]


RANDOM_ELEMENTS = ("C", "N", "O", "S", "F", "Cl")


def random_graph(rng, max_atoms=8, connected=False):
    """Seeded molecule-like graph of 1 to `max_atoms` atoms with random records.

    Unless `connected`, some atoms start a new fragment; extra bonds close rings.
    """
    n = int(rng.integers(1, max_atoms + 1))
    pairs = set()
    for i in range(1, n):
        if connected or rng.random() < 0.85:
            pairs.add((int(rng.integers(i)), i))
    for _ in range(int(rng.integers(3))):
        if n > 2:
            a, b = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
            pairs.add((a, b))

    orders = list(BondOrder)
    bonds = [
        BondRecord(a, b, orders[int(rng.integers(len(orders)))], bool(rng.random() < 0.3))
        for a, b in sorted(pairs)
    ]
    degree = np.zeros(n, dtype=np.int64)
    for a, b in pairs:
        degree[a] += 1
        degree[b] += 1
    atoms = [
        AtomRecord(
            element=RANDOM_ELEMENTS[int(rng.integers(len(RANDOM_ELEMENTS)))],
            formal_charge=int(rng.integers(-1, 2)),
            aromatic=bool(rng.random() < 0.3),
            degree=int(degree[i]),
            implicit_h=int(rng.integers(0, 4)),
        )
        for i in range(n)
    ]
    return MolGraph(atoms=atoms, bonds=bonds, source=f"random-{n}")


def write_text(filename, content):
    with open(filename, "w", encoding="utf-8") as f:
        f.write(content)


@pytest.fixture
def fresh_state_path(monkeypatch, tmp_path):
    """Keep the run log and global switches of each test to itself."""
    state = tmp_path / "state"
    monkeypatch.setattr(environment, "STATE_PATH", str(state))
    monkeypatch.setattr(environment, "DEBUG", False)
    yield state
    logger.stop_logging()
    nc.set_default_dtype(np.float64)


@pytest.fixture
def tiny_config():
    return MolGNetConfig(n_layers=2, steps_per_layer=2, hidden=8, heads=2, ffn=16)


@pytest.fixture
def tiny_params(tiny_config):
    return MolGNetParams.initialize(tiny_config, seed=3)


@pytest.fixture
def tiny_model():
    return PretrainModel.initialize(
        MolGNetConfig(n_layers=1, steps_per_layer=2, hidden=8, heads=2, ffn=16), seed=0
    )


@pytest.fixture
def corpus():
    return molecules(*SMALL_CORPUS)


@pytest.fixture
def run_config():
    return RunConfig(text=TINY_MODEL)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.ini"
    write_text(
        path,
        TINY_MODEL
        + """
[pretrain]
steps = 3
batch_size = 4
checkpoint_every = 2
holdout_fraction = 0.2

[finetune]
epochs = 2
batch_size = 8
patience = 2
""",
    )
    return path


@pytest.fixture
def in_process(monkeypatch):
    """Run mol-pretrain within the current process."""

    # Re-raise errors instead of exiting, to make test debugging easier.
    def reraise(*args, **kwargs):
        raise

    monkeypatch.setattr(sys, "exit", reraise)
