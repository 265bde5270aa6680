# coding=utf-8
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.


class Error(Exception):
    """Errors thrown explicitly by this package; won't generate a stack trace."""

    status: int = 1


class UsageError(Error):
    """Errors raised when the command line or a call is malformed."""

    status = 1


class ConfigError(UsageError):
    """Errors raised when the run configuration is invalid."""


class DataError(Error):
    """Errors raised by bad input data."""

    status = 2


class SmilesSyntaxError(DataError):
    """Errors raised when a SMILES string violates the supported grammar."""

    def __init__(self, msg: str, text: str = "", position: int = -1):
        self.text = text
        self.position = position
        if text:
            msg = f"{msg} at position {position} in {text!r}"
        super().__init__(msg)


class ValenceError(DataError):
    """Errors raised when an atom exceeds its allowed valence."""


class VocabError(DataError):
    """Errors raised when a feature value falls outside its vocabulary field."""


class TooSmallError(DataError):
    """Errors raised when a molecule is too small to decompose."""


class EmptyMaskError(DataError):
    """Errors raised when a masking objective has no masked positions."""


class DegenerateError(DataError):
    """Errors raised when a metric is undefined for its inputs."""


class CheckpointError(DataError):
    """Errors raised when a checkpoint cannot be read or does not match."""


class StructureError(DataError):
    """Errors raised when a batched graph breaks its structural contract."""


class IsolatedNodeError(DataError):
    """Errors raised when an ordinary node has nobody to attend to."""


class MissingInputError(DataError, FileNotFoundError):
    """Errors raised when an input file does not exist."""

    def __init__(self, path):
        self.path = path
        super().__init__(f"no such file: {path}")

    def __str__(self) -> str:
        return f"no such file: {self.path}"


class NumericalError(Error):
    """Errors raised by the tensor engine."""

    status = 3


class ShapeError(NumericalError):
    """Errors raised when operand shapes are incompatible."""


class MaskError(NumericalError):
    """Errors raised when a softmax row has no unmasked entries."""


class TapeError(NumericalError):
    """Errors raised when backward is requested for a tensor off the tape."""


class EmbeddingIndexError(NumericalError, IndexError):
    """Errors raised when an embedding lookup is out of range."""


class GradientCheckFailed(NumericalError):
    """Errors raised when analytic and numeric gradients disagree."""
