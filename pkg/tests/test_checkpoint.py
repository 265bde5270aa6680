# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import numpy as np
import pytest

from molpretrain.checkpoint import (
    config_mismatches,
    load_checkpoint,
    parameter_digest,
    restore_backbone,
    restore_heads,
    save_checkpoint,
)
from molpretrain.config import RunConfig
from molpretrain.exceptions import CheckpointError, MissingInputError
from molpretrain.molgnet import MolGNetParams
from molpretrain.numcore import Tensor

from .conftest import TINY_MODEL


@pytest.fixture
def saved(tmp_path, run_config):
    params = MolGNetParams.initialize(run_config.model_config(), seed=5)
    tensors = dict(params.items())
    tensors["head.task.W"] = Tensor(np.arange(6.0).reshape(2, 3))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, run_config, 17, tensors)
    return path, params


def test_round_trip_is_exact(saved, run_config):
    path, params = saved

    checkpoint = load_checkpoint(path)

    assert checkpoint.step == 17
    assert checkpoint.config.to_text() == run_config.to_text()
    for name, tensor in params.items():
        assert checkpoint.arrays[name].dtype == np.float64
        assert np.array_equal(checkpoint.arrays[name], tensor.data)
    assert set(checkpoint.heads()) == {"head.task.W"}


def test_round_trip_float32(tmp_path, run_config):
    values = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
    path = tmp_path / "f32.ckpt"
    save_checkpoint(path, run_config, 0, {"w": values, "b": np.zeros(4)})

    arrays = load_checkpoint(path).arrays

    assert arrays["w"].dtype == np.float32
    assert np.array_equal(arrays["w"], values)
    assert arrays["b"].dtype == np.float64


def test_rejects_integer_arrays(tmp_path, run_config):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "x.ckpt", run_config, 0, {"ids": np.arange(3)})


def test_missing_file(tmp_path):
    with pytest.raises(MissingInputError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_bad_magic(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(path)


def test_bad_version(saved):
    path, _ = saved
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncated(saved):
    path, _ = saved
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(saved):
    path, _ = saved
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_restore_backbone(saved, run_config):
    path, params = saved

    checkpoint = load_checkpoint(path)
    restored = restore_backbone(checkpoint, run_config)

    for name, tensor in params.items():
        assert np.array_equal(restored[name].data, tensor.data)
        assert restored[name].requires_grad
        restored[name].data[...] = 0.0
    # the loaded buffers stay untouched
    assert np.array_equal(checkpoint.arrays["embed.atom"], params["embed.atom"].data)


def test_restore_with_other_readout(saved):
    path, _ = saved
    config = RunConfig(text=TINY_MODEL + "readout = mean\n")

    assert config_mismatches(load_checkpoint(path).config, config) == {}
    restore_backbone(load_checkpoint(path), config)


def test_restore_rejects_other_model(saved):
    path, _ = saved
    config = RunConfig(text=TINY_MODEL.replace("hidden = 8", "hidden = 12"))

    with pytest.raises(CheckpointError, match="model.hidden: saved 8 != requested 12"):
        restore_backbone(load_checkpoint(path), config)


def test_restore_rejects_missing_tensor(tmp_path, run_config):
    params = MolGNetParams.initialize(run_config.model_config())
    tensors = dict(params.items())
    del tensors["embed.atom"]
    path = tmp_path / "partial.ckpt"
    save_checkpoint(path, run_config, 0, tensors)

    with pytest.raises(CheckpointError, match="missing"):
        restore_backbone(load_checkpoint(path), run_config)


def test_restore_heads(saved):
    path, _ = saved

    heads = restore_heads(load_checkpoint(path))

    assert list(heads) == ["head.task.W"]
    assert heads["head.task.W"].requires_grad
    assert np.array_equal(heads["head.task.W"].data, np.arange(6.0).reshape(2, 3))


def test_parameter_digest(run_config):
    first = MolGNetParams.initialize(run_config.model_config(), seed=1)
    again = MolGNetParams.initialize(run_config.model_config(), seed=1)
    other = MolGNetParams.initialize(run_config.model_config(), seed=2)

    assert len(parameter_digest(dict(first.items()))) == 16
    assert parameter_digest(dict(first.items())) == parameter_digest(dict(again.items()))
    assert parameter_digest(dict(first.items())) != parameter_digest(dict(other.items()))
