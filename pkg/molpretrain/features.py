# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Atom and bond featurization into embedding-table indices."""

from dataclasses import dataclass
from typing import (
    Callable,
    Dict,
    Tuple,
)

import numpy as np

from .chem import COLLECT, ELEMENTS, MASK, AtomRecord, BondOrder, BondRecord, MolGraph
from .exceptions import VocabError

ELEMENT_VOCAB: Tuple[str, ...] = ELEMENTS + (MASK, COLLECT)
ELEMENT_INDEX = {symbol: i for i, symbol in enumerate(ELEMENT_VOCAB)}
BOND_ORDER_INDEX = {order: i for i, order in enumerate(BondOrder)}

ATOM_VALUES: Dict[str, Callable[[AtomRecord], int]] = {
    "element": lambda atom: ELEMENT_INDEX.get(atom.element, -1),
    "charge": lambda atom: atom.formal_charge + 2,
    "hydrogens": lambda atom: atom.total_h,
    "aromatic": lambda atom: int(atom.aromatic),
    "degree": lambda atom: atom.degree,
}

BOND_VALUES: Dict[str, Callable[[BondRecord], int]] = {
    "order": lambda bond: BOND_ORDER_INDEX[bond.order],
    "in_ring": lambda bond: int(bond.in_ring),
}


@dataclass(frozen=True)
class FeatureField:
    name: str
    cardinality: int
    # Counts such as H and degree saturate at the last bucket instead of failing.
    clamp: bool = False

    def index(self, value: int, offset: int) -> int:
        if self.clamp:
            value = min(max(value, 0), self.cardinality - 1)
        if not 0 <= value < self.cardinality:
            raise VocabError(
                f"value {value} is outside field {self.name!r} "
                f"(cardinality {self.cardinality})"
            )
        return offset + value


def _prefix_sum(fields: Tuple[FeatureField, ...]) -> Tuple[int, ...]:
    return tuple(int(v) for v in np.cumsum([0] + [f.cardinality for f in fields])[:-1])


@dataclass(frozen=True)
class FeatureVocab:
    """Field cardinalities for atoms and bonds, laid out in one table per side."""

    atom_fields: Tuple[FeatureField, ...]
    bond_fields: Tuple[FeatureField, ...]

    @classmethod
    def default(cls) -> "FeatureVocab":
        return cls(
            atom_fields=(
                FeatureField("element", len(ELEMENT_VOCAB)),
                FeatureField("charge", 5),
                FeatureField("hydrogens", 5, clamp=True),
                FeatureField("aromatic", 2),
                FeatureField("degree", 6, clamp=True),
            ),
            bond_fields=(
                FeatureField("order", len(BondOrder)),
                FeatureField("in_ring", 2),
            ),
        )

    @property
    def atom_offsets(self) -> Tuple[int, ...]:
        return _prefix_sum(self.atom_fields)

    @property
    def bond_offsets(self) -> Tuple[int, ...]:
        return _prefix_sum(self.bond_fields)

    @property
    def atom_vocab_size(self) -> int:
        return sum(f.cardinality for f in self.atom_fields)

    @property
    def bond_vocab_size(self) -> int:
        return sum(f.cardinality for f in self.bond_fields)

    @property
    def num_elements(self) -> int:
        return self.atom_fields[0].cardinality

    def element_offset(self) -> int:
        return self.atom_offsets[0]

    def atom_indices(self, atom: AtomRecord) -> np.ndarray:
        return np.array(
            [
                fld.index(ATOM_VALUES[fld.name](atom), offset)
                for fld, offset in zip(self.atom_fields, self.atom_offsets)
            ],
            dtype=np.int64,
        )

    def bond_indices(self, bond: BondRecord) -> np.ndarray:
        return np.array(
            [
                fld.index(BOND_VALUES[fld.name](bond), offset)
                for fld, offset in zip(self.bond_fields, self.bond_offsets)
            ],
            dtype=np.int64,
        )

    def special_atom_indices(self, symbol: str) -> np.ndarray:
        """Indices of a reserved MASK or COLLECT atom with neutral features."""
        return self.atom_indices(AtomRecord(element=symbol))


def featurize(graph: MolGraph, vocab: FeatureVocab) -> Tuple[np.ndarray, np.ndarray]:
    """Map every atom and bond to one global index per feature field.

    Returns ``(atom_indices, bond_indices)`` with shapes
    ``(num_atoms, len(atom_fields))`` and ``(num_bonds, len(bond_fields))``.
    """
    atoms = np.zeros((graph.num_atoms, len(vocab.atom_fields)), dtype=np.int64)
    for i, atom in enumerate(graph.atoms):
        atoms[i] = vocab.atom_indices(atom)

    bonds = np.zeros((graph.num_bonds, len(vocab.bond_fields)), dtype=np.int64)
    for i, bond in enumerate(graph.bonds):
        bonds[i] = vocab.bond_indices(bond)

    return atoms, bonds
