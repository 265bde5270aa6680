# coding=utf-8
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""SMILES front end: molecular graph types, parser and valence rules.

The supported grammar is the organic subset plus bracket atoms carrying an
H count and a formal charge, the bond symbols ``- = # :``, branches, ring
closures (``1``..``9`` and ``%nn``), lowercase aromatic atoms and ``.``
component separators.  Stereochemistry, isotopes and wildcards are rejected.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import networkx as nx
import numpy as np

from .exceptions import SmilesSyntaxError, StructureError, ValenceError

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "H")
MASK = "MASK"
COLLECT = "COLLECT"

ORGANIC_SUBSET = frozenset(("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"))
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}

VALENCES: Dict[str, Tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    "H": (1,),
}

# Elements whose valence follows the sign of the charge (N+ binds 4, B- binds 4);
# every other element loses |charge| bonding capacity.
CHARGE_DIRECTION = {"N": 1, "P": 1, "O": 1, "S": 1, "B": -1}

# heteroatoms that can sit in an aromatic ring with a lone pair in the pi system
LONE_PAIR_DONORS = frozenset(("N", "O", "S", "P"))

TOKEN_RE = re.compile(r"\[[^\]]*\]|Br|Cl|%\d\d|[BCNOPSFI]|[bcnops]|\d|[-=#:().]|.")
BRACKET_RE = re.compile(
    r"^(?P<symbol>[A-Z][a-z]?|[bcnops])(?P<h>H\d?)?(?P<charge>\+\+|--|[+-]\d?)?$"
)


class BondOrder(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def bond_count(self) -> int:
        """Bonding capacity consumed by a non-aromatic bond."""
        return {"single": 1, "double": 2, "triple": 3, "aromatic": 1}[self.value]


BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}


@dataclass(frozen=True)
class AtomRecord:
    element: str
    formal_charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    degree: int = 0
    implicit_h: int = 0
    bracket: bool = False

    @property
    def total_h(self) -> int:
        return self.explicit_h + self.implicit_h


@dataclass(frozen=True)
class BondRecord:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    in_ring: bool = False

    def other(self, atom: int) -> int:
        return self.b if atom == self.a else self.a


@dataclass
class MolGraph:
    """A molecule as atoms connected by undirected bonds.

    Each bond is stored once; the model expands it into two directed arcs.
    ``adjacency[i]`` lists ``(neighbor_atom_index, bond_index)`` pairs.
    """

    atoms: List[AtomRecord]
    bonds: List[BondRecord]
    source: str = ""
    adjacency: List[List[Tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.adjacency:
            self.adjacency = build_adjacency(len(self.atoms), self.bonds)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def num_bonds(self) -> int:
        return len(self.bonds)

    def validate(self):
        """Raise `StructureError` unless the graph invariants hold."""
        if not self.atoms:
            raise StructureError("a molecular graph needs at least one atom")

        seen = set()
        for index, bond in enumerate(self.bonds):
            if not (0 <= bond.a < self.num_atoms and 0 <= bond.b < self.num_atoms):
                raise StructureError(f"bond {index} has an invalid endpoint")
            if bond.a == bond.b:
                raise StructureError(f"bond {index} is a self-loop")
            pair = frozenset((bond.a, bond.b))
            if pair in seen:
                raise StructureError(f"bond {index} duplicates an earlier bond")
            seen.add(pair)

        for i, neighbors in enumerate(self.adjacency):
            for j, b in neighbors:
                if (i, b) not in self.adjacency[j]:
                    raise StructureError(f"adjacency of atoms {i} and {j} is one-way")

    def induced_subgraph(self, indices: Sequence[int]) -> MolGraph:
        """Keep the given atoms (in order) and the bonds among them.

        Atom and bond records are carried over unchanged, so degree and
        hydrogen counts still describe the parent molecule.
        """
        remap = {old: new for new, old in enumerate(indices)}
        bonds = [
            replace(bond, a=remap[bond.a], b=remap[bond.b])
            for bond in self.bonds
            if bond.a in remap and bond.b in remap
        ]
        return MolGraph(
            atoms=[self.atoms[i] for i in indices], bonds=bonds, source=self.source
        )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "smiles": self.source,
            "atoms": [
                {
                    "element": atom.element,
                    "charge": atom.formal_charge,
                    "hydrogens": atom.total_h,
                    "aromatic": atom.aromatic,
                    "degree": atom.degree,
                }
                for atom in self.atoms
            ],
            "bonds": [
                [bond.a, bond.b, bond.order.value, bond.in_ring] for bond in self.bonds
            ],
        }


def build_adjacency(
    num_atoms: int, bonds: Sequence[BondRecord]
) -> List[List[Tuple[int, int]]]:
    adjacency: List[List[Tuple[int, int]]] = [[] for _ in range(num_atoms)]
    for index, bond in enumerate(bonds):
        adjacency[bond.a].append((bond.b, index))
        adjacency[bond.b].append((bond.a, index))
    return adjacency


def allowed_valences(element: str, charge: int = 0) -> Tuple[int, ...]:
    """Bonding capacities of `element` carrying `charge`."""
    if element not in VALENCES:
        return ()
    if element in CHARGE_DIRECTION:
        shift = CHARGE_DIRECTION[element] * charge
    else:
        shift = -abs(charge)
    return tuple(max(0, valence + shift) for valence in VALENCES[element])


def bond_order_sum(atom: AtomRecord, orders: Sequence[BondOrder]) -> int:
    """Bonding capacity used by `atom` through `orders` and its explicit H.

    Aromatic bonds count one each, plus one for the whole aromatic system
    the atom belongs to (the implied double bond).  An exocyclic double bond,
    as in pyridone `O=c1cc[nH]cc1`, takes the place of the implied one.
    """
    aromatic = sum(1 for order in orders if order is BondOrder.AROMATIC)
    plain = sum(order.bond_count for order in orders if order is not BondOrder.AROMATIC)
    implied = 1 if aromatic and BondOrder.DOUBLE not in orders else 0
    return plain + aromatic + implied + atom.explicit_h


def donates_lone_pair(atom: AtomRecord, orders: Sequence[BondOrder]) -> bool:
    """Pyrrole-type ring atom: a heteroatom with two aromatic bonds."""
    aromatic = sum(1 for order in orders if order is BondOrder.AROMATIC)
    return atom.element in LONE_PAIR_DONORS and aromatic == 2


def valence_ok(atom: AtomRecord, orders: Sequence[BondOrder]) -> bool:
    allowed = allowed_valences(atom.element, atom.formal_charge)
    if not allowed:
        return True
    used = bond_order_sum(atom, orders)
    if used <= max(allowed):
        return True
    # pyrrole-type atoms donate a lone pair instead of a double bond
    return donates_lone_pair(atom, orders) and used - 1 <= max(allowed)


def implicit_hydrogens(atom: AtomRecord, orders: Sequence[BondOrder]) -> int:
    """Allowed valence minus used valence, floored at zero."""
    allowed = allowed_valences(atom.element, atom.formal_charge)
    if not allowed:
        return 0
    used = bond_order_sum(atom, orders)
    if donates_lone_pair(atom, orders) and used > allowed[0] >= used - 1:
        # furan O, thiophene S
        return 0
    target = next((v for v in allowed if v >= used), max(allowed))
    return max(0, target - used)


def valence_violations(graph: MolGraph) -> List[int]:
    """Indices of atoms whose bonds exceed their element's capacity."""
    violations = []
    for i, atom in enumerate(graph.atoms):
        orders = [graph.bonds[b].order for _, b in graph.adjacency[i]]
        if not valence_ok(atom, orders):
            violations.append(i)
    return violations


def _tokenize(text: str) -> Iterator[Tuple[int, str]]:
    for match in TOKEN_RE.finditer(text):
        yield match.start(), match.group()


def _parse_bracket(token: str, text: str, position: int) -> AtomRecord:
    match = BRACKET_RE.match(token[1:-1])
    if not match:
        raise SmilesSyntaxError("malformed bracket atom", text, position)

    symbol = match.group("symbol")
    aromatic = symbol in AROMATIC_SYMBOLS
    element = AROMATIC_SYMBOLS.get(symbol, symbol)
    if element not in ELEMENTS:
        raise SmilesSyntaxError(f"unsupported element {symbol!r}", text, position)

    h_part = match.group("h")
    explicit_h = 0
    if h_part:
        explicit_h = int(h_part[1:]) if len(h_part) > 1 else 1

    charge_part = match.group("charge")
    charge = 0
    if charge_part:
        sign = 1 if charge_part[0] == "+" else -1
        if len(charge_part) == 1:
            charge = sign
        elif charge_part[1] in "+-":
            charge = 2 * sign
        else:
            charge = sign * int(charge_part[1:])
    if not -2 <= charge <= 2:
        raise SmilesSyntaxError("formal charge out of range", text, position)

    return AtomRecord(
        element=element,
        formal_charge=charge,
        explicit_h=explicit_h,
        aromatic=aromatic,
        bracket=True,
    )


def _resolve_order(
    symbol: Optional[str], atoms: List[AtomRecord], a: int, b: int
) -> BondOrder:
    if symbol is not None:
        return BOND_SYMBOLS[symbol]
    if atoms[a].aromatic and atoms[b].aromatic:
        return BondOrder.AROMATIC
    return BondOrder.SINGLE


def parse_smiles(text: str, check_valence: bool = True) -> MolGraph:
    """Parse `text` into a `MolGraph`.

    Raises `SmilesSyntaxError` for input outside the supported grammar and,
    when `check_valence` is set, `ValenceError` for over-bonded atoms.
    """
    if not text or not text.isascii():
        raise SmilesSyntaxError(f"SMILES must be non-empty ASCII: {text!r}")

    atoms: List[AtomRecord] = []
    raw_bonds: List[Tuple[int, int, Optional[str]]] = []
    pairs = set()
    branches: List[Tuple[int, int]] = []
    rings: Dict[int, Tuple[int, Optional[str], int]] = {}
    prev: Optional[int] = None
    pending: Optional[str] = None
    last = ""

    def add_bond(a: int, b: int, symbol: Optional[str], position: int):
        pair = frozenset((a, b))
        if a == b:
            raise SmilesSyntaxError("ring closure onto the same atom", text, position)
        if pair in pairs:
            raise SmilesSyntaxError("duplicate bond", text, position)
        pairs.add(pair)
        raw_bonds.append((a, b, symbol))

    for position, token in _tokenize(text):
        if token.startswith("[") and len(token) > 1:
            atom = _parse_bracket(token, text, position)
        elif token in ORGANIC_SUBSET:
            atom = AtomRecord(element=token)
        elif token in AROMATIC_SYMBOLS:
            atom = AtomRecord(element=AROMATIC_SYMBOLS[token], aromatic=True)
        else:
            atom = None

        if atom is not None:
            atoms.append(atom)
            index = len(atoms) - 1
            if prev is not None:
                add_bond(prev, index, pending, position)
            elif pending is not None:
                raise SmilesSyntaxError("bond without a preceding atom", text, position)
            prev, pending = index, None
        elif token in BOND_SYMBOLS:
            if prev is None or pending is not None:
                raise SmilesSyntaxError("misplaced bond symbol", text, position)
            pending = token
        elif token == "(":
            if prev is None or pending is not None:
                raise SmilesSyntaxError("misplaced branch", text, position)
            branches.append((prev, position))
        elif token == ")":
            if not branches:
                raise SmilesSyntaxError("unbalanced parenthesis", text, position)
            if last == "(" or pending is not None:
                raise SmilesSyntaxError("empty or dangling branch", text, position)
            prev, _ = branches.pop()
        elif token.isdigit() or (token.startswith("%") and len(token) == 3):
            if prev is None:
                raise SmilesSyntaxError("ring closure without an atom", text, position)
            number = int(token.lstrip("%"))
            if number in rings:
                other, symbol, _ = rings.pop(number)
                if symbol is not None and pending is not None and symbol != pending:
                    raise SmilesSyntaxError(
                        "conflicting ring-closure bonds", text, position
                    )
                add_bond(other, prev, symbol or pending, position)
            else:
                rings[number] = (prev, pending, position)
            pending = None
        elif token == ".":
            if prev is None or pending is not None or branches:
                raise SmilesSyntaxError("misplaced component separator", text, position)
            prev = None
        else:
            raise SmilesSyntaxError(f"unknown symbol {token!r}", text, position)
        last = token

    end = len(text)
    if pending is not None:
        raise SmilesSyntaxError("dangling bond", text, end)
    if branches:
        raise SmilesSyntaxError("unbalanced parenthesis", text, branches[-1][1])
    if rings:
        _, _, position = next(iter(rings.values()))
        raise SmilesSyntaxError("dangling ring closure", text, position)
    if prev is None:
        raise SmilesSyntaxError("missing atom after separator", text, end)

    ring_graph = nx.Graph()
    ring_graph.add_nodes_from(range(len(atoms)))
    ring_graph.add_edges_from((a, b) for a, b, _ in raw_bonds)
    bridges = {frozenset(edge) for edge in nx.bridges(ring_graph)}

    bonds = [
        BondRecord(
            a=a,
            b=b,
            order=_resolve_order(symbol, atoms, a, b),
            in_ring=frozenset((a, b)) not in bridges,
        )
        for a, b, symbol in raw_bonds
    ]
    graph = MolGraph(atoms=atoms, bonds=bonds, source=text)

    finished = []
    for i, atom in enumerate(graph.atoms):
        orders = [graph.bonds[b].order for _, b in graph.adjacency[i]]
        if check_valence and not valence_ok(atom, orders):
            raise ValenceError(
                f"atom {i} ({atom.element}) exceeds its allowed valence in {text!r}"
            )
        implicit = 0 if atom.bracket else implicit_hydrogens(atom, orders)
        finished.append(
            replace(atom, degree=len(graph.adjacency[i]), implicit_h=implicit)
        )
    graph.atoms = finished
    return graph


def shuffle_atom_features(
    graph: MolGraph, rng_seed: Union[int, np.random.Generator, None]
) -> MolGraph:
    """Permute atom records across positions, keeping the bond topology."""
    if graph.num_atoms < 2:
        return MolGraph(
            atoms=list(graph.atoms), bonds=list(graph.bonds), source=graph.source
        )

    rng = np.random.default_rng(rng_seed)
    permutation = rng.permutation(graph.num_atoms)
    return permute_atoms(graph, permutation)


def permute_atoms(graph: MolGraph, permutation: Sequence[int]) -> MolGraph:
    """Place the record of atom ``permutation[i]`` at position ``i``."""
    return MolGraph(
        atoms=[graph.atoms[int(p)] for p in permutation],
        bonds=list(graph.bonds),
        source=graph.source,
    )


def relabel_atoms(graph: MolGraph, order: Sequence[int]) -> MolGraph:
    """Renumber atoms so that new atom ``i`` is old atom ``order[i]``.

    Unlike `permute_atoms`, bonds follow their atoms, so the molecule is the
    same up to numbering.
    """
    new_index = {int(old): new for new, old in enumerate(order)}
    bonds = [
        replace(bond, a=new_index[bond.a], b=new_index[bond.b]) for bond in graph.bonds
    ]
    return MolGraph(
        atoms=[graph.atoms[int(old)] for old in order], bonds=bonds, source=graph.source
    )
