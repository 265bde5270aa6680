# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import json
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from molpretrain.checkpoint import load_checkpoint
from molpretrain.exceptions import (
    CheckpointError,
    DataError,
    GradientCheckFailed,
    MissingInputError,
    UsageError,
)
from molpretrain.molpretrain import main
from molpretrain.pretraining import read_metrics

from .conftest import TINY_MODEL, write_text


def mol_pretrain(*argv):
    main(list(argv), is_development=True)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_version(in_process, capsys):
    mol_pretrain("--version")
    assert "MolPretrain" in capsys.readouterr().out


def records(out):
    return [json.loads(line) for line in out.splitlines() if line.startswith("{")]


def test_parse(in_process, capsys):
    mol_pretrain("parse", "c1ccccc1O", "CCO")

    first, second = records(capsys.readouterr().out)
    assert first["smiles"] == "c1ccccc1O"
    assert first["valid"] is True
    assert first["error"] is None
    assert len(first["atoms"]) == 7
    assert len(first["bonds"]) == 7
    assert second["bonds"] == [[0, 1, "single", False], [1, 2, "single", False]]


def test_parse_describe(in_process, capsys):
    mol_pretrain("parse", "CC=O", "--describe")

    out = capsys.readouterr().out
    assert "atoms: 0:CH3 1:CH1 2:OH0" in out
    assert "bonds: 0-1:single 1-2:double" in out


def test_parse_error_status(in_process, capsys):
    with pytest.raises(DataError) as excinfo:
        mol_pretrain("parse", "C1CC")
    assert excinfo.value.status == 2

    (record,) = records(capsys.readouterr().out)
    assert record["valid"] is False
    assert "dangling ring closure" in record["error"]
    assert record["atoms"] == []


def test_parse_valence_verdict(in_process, capsys):
    with pytest.raises(DataError):
        mol_pretrain("parse", "CC", "c1ccccc1(C)C")

    valid, invalid = records(capsys.readouterr().out)
    assert valid["valid"] is True
    assert invalid["valid"] is False
    assert invalid["violations"] == [5]
    assert len(invalid["atoms"]) == 8

    mol_pretrain("parse", "c1ccccc1(C)C", "--no-valence")
    (record,) = records(capsys.readouterr().out)
    assert record["valid"] is False


def test_parse_file_reports_failures(in_process, workdir, capsys):
    write_text("mixed.smi", "CCO\nC((\nCN\n")
    with pytest.raises(DataError) as excinfo:
        mol_pretrain("parse", "--file", "mixed.smi")
    assert excinfo.value.status == 2
    assert "1 of 3 molecules are invalid" in str(excinfo.value)

    lines = records(capsys.readouterr().out)
    assert [r["smiles"] for r in lines] == ["CCO", "C((", "CN"]
    assert [r["valid"] for r in lines] == [True, False, True]


def test_usage_errors(in_process, workdir):
    with pytest.raises(UsageError):
        mol_pretrain("parse")
    with pytest.raises(UsageError):
        mol_pretrain("pretrain", "--checkpoint", "x.ckpt")


def test_missing_input(in_process, workdir):
    with pytest.raises(MissingInputError):
        mol_pretrain("pretrain", "--corpus", "absent.smi", "--log", "m.jsonl")


def test_exit_status(workdir):
    with pytest.raises(SystemExit) as excinfo:
        mol_pretrain("parse", "C((")
    assert excinfo.value.code == 2

    with pytest.raises(SystemExit) as excinfo:
        mol_pretrain("frobnicate")
    assert excinfo.value.code == 1


@mock.patch("molpretrain.molpretrain.report_to_sentry")
def test_unexpected_errors_are_reported(m_report, workdir, capsys):
    with mock.patch(
        "molpretrain.commands.version.platform.python_version",
        side_effect=RuntimeError("boom"),
    ):
        with pytest.raises(SystemExit) as excinfo:
            mol_pretrain("version")

    assert excinfo.value.code == 1
    m_report.assert_called_once()
    assert "RuntimeError: boom" in capsys.readouterr().out



@mock.patch("molpretrain.molpretrain.report_to_sentry")
def test_out_of_memory(m_report, workdir, capsys):
    with mock.patch(
        "molpretrain.commands.version.platform.python_version",
        side_effect=MemoryError,
    ):
        with pytest.raises(SystemExit) as excinfo:
            mol_pretrain("version")

    assert excinfo.value.code == 1
    m_report.assert_not_called()
    assert "Out of memory" in capsys.readouterr().out


def test_precision_flag(in_process, workdir, config_file):
    mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "12")
    mol_pretrain(
        "pretrain",
        "--config",
        str(config_file),
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "f32.ckpt",
        "--log",
        "m.jsonl",
        "--precision",
        "32",
        "--steps",
        "1",
    )

    arrays = load_checkpoint(workdir / "f32.ckpt").arrays
    assert all(array.dtype == np.float32 for array in arrays.values())


def test_pipeline(in_process, workdir, config_file, capsys):
    config = str(config_file)
    mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "30")
    mol_pretrain("synth", "--task", "--out", "task.csv", "--molecules", "30")

    mol_pretrain(
        "pretrain",
        "--config",
        config,
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "model.ckpt",
        "--log",
        "metrics.jsonl",
    )
    assert load_checkpoint(workdir / "model.ckpt").step == 3
    assert [r["step"] for r in read_metrics(workdir / "metrics.jsonl")] == [1, 2, 3]

    mol_pretrain(
        "finetune",
        "--config",
        config,
        "--dataset",
        "task.csv",
        "--checkpoint",
        "model.ckpt",
        "--out",
        "tuned.ckpt",
        "--threshold",
        "0.5",
    )
    tuned = load_checkpoint(workdir / "tuned.ckpt")
    assert set(tuned.heads()) == {"head.task.W", "head.task.b"}

    capsys.readouterr()
    mol_pretrain(
        "eval",
        "--config",
        config,
        "--dataset",
        "task.csv",
        "--checkpoint",
        "tuned.ckpt",
        "--split",
        "test",
    )
    assert "3 rows (test): auc_roc " in capsys.readouterr().out

    mol_pretrain(
        "embed",
        "--config",
        config,
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "model.ckpt",
        "--out",
        "embeddings.csv",
    )
    frame = pd.read_csv(workdir / "embeddings.csv")
    assert list(frame.columns) == ["smiles"] + [f"e{i}" for i in range(8)]
    assert len(frame) == 30

    capsys.readouterr()
    mol_pretrain(
        "attend", "OCCO", "--config", config, "--checkpoint", "model.ckpt", "--per-head"
    )
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "atom element mean head0 head1"
    rows = [line.split() for line in lines[1:]]
    assert [row[1] for row in rows] == ["O", "C", "C", "O"]
    assert sum(float(row[2]) for row in rows) == pytest.approx(1.0, abs=1e-5)


def test_eval_validity(in_process, workdir, config_file, capsys):
    config = str(config_file)
    mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "100")
    mol_pretrain(
        "pretrain",
        "--config",
        config,
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "model.ckpt",
        "--steps",
        "1",
    )

    capsys.readouterr()
    for presentation in ("pair", "single"):
        mol_pretrain(
            "eval",
            "--config",
            config,
            "--checkpoint",
            "model.ckpt",
            "--validity",
            "--corpus",
            "corpus.smi",
            "--presentation",
            presentation,
        )
        out = capsys.readouterr().out
        assert "untrained: " in out
        assert "pretrained: " in out


def test_pretraining_is_reproducible(in_process, workdir, config_file, monkeypatch):
    runs = []
    for name in ("first", "second"):
        (workdir / name).mkdir()
        monkeypatch.chdir(workdir / name)
        mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "20")
        mol_pretrain(
            "pretrain",
            "--config",
            str(config_file),
            "--corpus",
            "corpus.smi",
            "--checkpoint",
            "model.ckpt",
            "--log",
            "metrics.jsonl",
            "--seed",
            "7",
            "--precision",
            "64",
        )
        runs.append(
            (
                (workdir / name / "model.ckpt").read_bytes(),
                (workdir / name / "metrics.jsonl").read_bytes(),
            )
        )

    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]
    assert len(runs[0][1].splitlines()) == 3


def test_finetune_without_pretraining(in_process, workdir, config_file, capsys):
    mol_pretrain("synth", "--task", "--out", "task.csv", "--molecules", "40")

    mol_pretrain(
        "finetune",
        "--config",
        str(config_file),
        "--dataset",
        "task.csv",
        "--no-pretrain",
        "--folds",
        "2",
    )

    out = capsys.readouterr().out
    assert "run 2:" in out
    assert "over 2 runs" in out


def test_eval_needs_task_head(in_process, workdir, config_file):
    mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "12")
    mol_pretrain("synth", "--task", "--out", "task.csv", "--molecules", "12")
    mol_pretrain(
        "pretrain",
        "--config",
        str(config_file),
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "model.ckpt",
        "--log",
        "m.jsonl",
        "--steps",
        "1",
    )

    with pytest.raises(CheckpointError, match="no task head"):
        mol_pretrain(
            "eval",
            "--config",
            str(config_file),
            "--dataset",
            "task.csv",
            "--checkpoint",
            "model.ckpt",
        )


def test_checkpoint_model_mismatch(in_process, workdir, config_file):
    mol_pretrain("synth", "--out", "corpus.smi", "--molecules", "12")
    mol_pretrain(
        "pretrain",
        "--config",
        str(config_file),
        "--corpus",
        "corpus.smi",
        "--checkpoint",
        "model.ckpt",
        "--log",
        "m.jsonl",
        "--steps",
        "0",
    )
    write_text("wide.ini", TINY_MODEL.replace("hidden = 8", "hidden = 16"))

    with pytest.raises(CheckpointError):
        mol_pretrain(
            "embed",
            "--config",
            "wide.ini",
            "--corpus",
            "corpus.smi",
            "--checkpoint",
            "model.ckpt",
            "--out",
            "e.csv",
        )


def test_gradcheck(in_process, workdir, config_file, capsys):
    mol_pretrain("gradcheck", "--config", str(config_file), "--max-coords", "3")

    out = capsys.readouterr().out
    assert "all gradients agree within 0.0001" in out
    assert "at most 3 coordinates per parameter tensor" in out


def test_gradcheck_failure(in_process, workdir, config_file):
    with pytest.raises(GradientCheckFailed) as excinfo:
        mol_pretrain(
            "gradcheck", "--config", str(config_file), "--max-coords", "3", "--tol", "0"
        )
    assert excinfo.value.status == 3
