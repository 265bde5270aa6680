# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import json
from typing import Any, Dict

from molpretrain.args import add_common_arguments
from molpretrain.chem import parse_smiles, valence_violations
from molpretrain.datasets import read_smiles_lines
from molpretrain.exceptions import DataError, UsageError, ValenceError
from molpretrain.logger import logger


def _atom_label(index, atom) -> str:
    label = f"{index}:{atom.element}"
    if atom.aromatic:
        label += "(ar)"
    if atom.formal_charge:
        label += f"{atom.formal_charge:+d}"
    return f"{label}H{atom.total_h}"


def describe(graph) -> str:
    atoms = " ".join(_atom_label(i, atom) for i, atom in enumerate(graph.atoms))
    bonds = " ".join(
        f"{b.a}-{b.b}:{b.order.value}{'(ring)' if b.in_ring else ''}" for b in graph.bonds
    )
    return f"{graph.source}\n  atoms: {atoms}\n  bonds: {bonds or '-'}"


def molecule_record(text: str) -> Dict[str, Any]:
    """Atoms, bonds and the validity verdict of one SMILES string.

    A syntax error leaves the atom and bond lists empty; an over-valent
    molecule keeps its graph and lists the offending atoms.
    """
    record: Dict[str, Any] = {
        "smiles": text,
        "valid": True,
        "error": None,
        "atoms": [],
        "bonds": [],
        "violations": [],
    }
    try:
        graph = parse_smiles(text)
    except ValenceError as e:
        graph = parse_smiles(text, check_valence=False)
        record.update(valid=False, error=str(e), violations=valence_violations(graph))
    except DataError as e:
        record.update(valid=False, error=str(e))
        return record
    data = graph.as_dict()
    record.update(atoms=data["atoms"], bonds=data["bonds"])
    return record


def parse(args, config):
    if not args.smiles and args.file is None:
        raise UsageError("give SMILES strings or --file")
    inputs = read_smiles_lines(args.file) if args.file is not None else args.smiles

    failed = 0
    for text in inputs:
        record = molecule_record(text)
        only_valence = record["error"] is not None and record["violations"]
        if not record["valid"] and not (args.no_valence and only_valence):
            failed += 1

        if args.describe:
            if record["atoms"]:
                logger.info(describe(parse_smiles(text, check_valence=False)))
            if record["error"] is not None:
                logger.warning("invalid: %s", record["error"])
        else:
            print(json.dumps(record))

    summary = logger.info if args.describe else logger.debug
    summary("%s parsed, %s failed", len(inputs) - failed, failed)
    if failed:
        raise DataError(f"{failed} of {len(inputs)} molecules are invalid")


def add_parser(parser):
    parse_parser = parser.add_parser(
        "parse",
        help="Parse SMILES and print one JSON record per molecule "
        "(atoms, bonds, validity).",
    )
    parse_parser.add_argument("smiles", nargs="*", help="SMILES strings")
    parse_parser.add_argument(
        "--file", type=str, help="read one SMILES per line from this file"
    )
    parse_parser.add_argument(
        "--describe",
        action="store_true",
        help="log a readable summary instead of JSON records",
    )
    parse_parser.add_argument(
        "--no-valence",
        action="store_true",
        help="report valence violations without failing on them",
    )
    add_common_arguments(parse_parser)
    parse_parser.set_defaults(func=parse)
