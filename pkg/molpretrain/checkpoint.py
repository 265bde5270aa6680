# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Binary checkpoints: run config, step counter and named parameter arrays.

Layout (little-endian)::

    b"MPGC"  u16 version  u32 len + config INI text  u64 step  u32 count
    count x [u32 len + name  u8 itemsize  u32 rank  rank x u32 dim  raw data]

Arrays keep their own float width, so a round trip is exact in both
precisions.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    BinaryIO,
    Dict,
    Mapping,
    Union,
)

import numpy as np

from .config import RunConfig
from .exceptions import CheckpointError, MissingInputError
from .logger import logger
from .molgnet import MolGNetParams, parameter_shapes
from .numcore import Tensor

MAGIC = b"MPGC"
FORMAT_VERSION = 1
DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}
# keys of [model] that do not change the backbone
READOUT_ONLY = frozenset(("readout",))


@dataclass
class Checkpoint:
    config_text: str
    step: int
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def config(self) -> RunConfig:
        return RunConfig.from_text(self.config_text)

    def backbone(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if not k.startswith("head.")}

    def heads(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k.startswith("head.")}


def _write_blob(f: BinaryIO, data: bytes):
    f.write(struct.pack("<I", len(data)))
    f.write(data)


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError("checkpoint is truncated")
    return data


def _read_blob(f: BinaryIO) -> bytes:
    (size,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, size)


def save_checkpoint(
    path: Path,
    config: RunConfig,
    step: int,
    tensors: Mapping[str, Union[Tensor, np.ndarray]],
):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        _write_blob(f, config.to_text().encode("utf-8"))
        f.write(struct.pack("<QI", step, len(tensors)))
        for name, tensor in tensors.items():
            data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
            if data.dtype.itemsize not in DTYPES or data.dtype.kind != "f":
                raise CheckpointError(f"cannot store {name} of type {data.dtype}")
            _write_blob(f, name.encode("utf-8"))
            f.write(struct.pack("<BI", data.dtype.itemsize, data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.astype(DTYPES[data.dtype.itemsize], copy=False).tobytes())
    logger.debug("saved %s tensors at step %s to %s", len(tensors), step, path)


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(path)
    with path.open("rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint")
        (version,) = struct.unpack("<H", _read_exact(f, 2))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config_text = _read_blob(f).decode("utf-8")
        step, count = struct.unpack("<QI", _read_exact(f, 12))

        arrays = {}
        for _ in range(count):
            name = _read_blob(f).decode("utf-8")
            itemsize, rank = struct.unpack("<BI", _read_exact(f, 5))
            if itemsize not in DTYPES:
                raise CheckpointError(f"{name} has an unknown element size {itemsize}")
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            size = int(np.prod(shape, dtype=np.int64)) * itemsize
            arrays[name] = np.frombuffer(
                _read_exact(f, size), dtype=DTYPES[itemsize]
            ).reshape(shape)
        if f.read(1):
            raise CheckpointError("trailing bytes after the last tensor")
    return Checkpoint(config_text, step, arrays)


def config_mismatches(saved: RunConfig, current: RunConfig) -> Dict[str, tuple]:
    old = saved.model_config().as_dict()
    new = current.model_config().as_dict()
    return {
        key: (old.get(key), new.get(key))
        for key in sorted(set(old) | set(new))
        if key not in READOUT_ONLY and old.get(key) != new.get(key)
    }


def restore_backbone(checkpoint: Checkpoint, config: RunConfig) -> MolGNetParams:
    """Backbone parameters from `checkpoint`, built for `config`.

    The model section of `config` has to agree with the saved one.
    """
    mismatches = config_mismatches(checkpoint.config, config)
    if mismatches:
        detail = ", ".join(
            f"model.{key}: saved {old} != requested {new}"
            for key, (old, new) in mismatches.items()
        )
        raise CheckpointError(f"checkpoint does not match the model config ({detail})")

    model_config = config.model_config()
    expected = parameter_shapes(model_config)
    arrays = checkpoint.backbone()
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint parameters differ: missing {missing}, unexpected {extra}"
        )
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointError(
                f"{name} has shape {arrays[name].shape}, expected {shape}"
            )

    params = MolGNetParams.initialize(model_config)
    params.load_arrays(arrays)
    return params


def restore_heads(checkpoint: Checkpoint) -> Dict[str, Tensor]:
    return {
        name: Tensor(array.copy(), requires_grad=True)
        for name, array in checkpoint.heads().items()
    }


def parameter_digest(tensors: Mapping[str, Tensor]) -> str:
    """Short hash of parameter names and values, for logging initializations."""
    digest = hashlib.sha256()
    for name, tensor in tensors.items():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(tensor.data).tobytes())
    return digest.hexdigest()[:16]
