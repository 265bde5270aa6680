# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from unittest import mock

import pytest

from molpretrain import molpretrain
from molpretrain.exceptions import CheckpointError, ShapeError
from molpretrain.sentry import report_to_sentry

from .conftest import write_text

DSN = "https://key@example.invalid/1"


@pytest.fixture
def sentry_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_text("sentry.ini", f"[error_reporting]\ndsn = {DSN}\n")
    return ["synth", "--config", "sentry.ini", "--out", "corpus.smi"]


@mock.patch("molpretrain.molpretrain.init_sentry")
def test_sentry_not_enabled_if_development(m_init_sentry, sentry_config):
    molpretrain.main(sentry_config, is_development=True)

    m_init_sentry.assert_not_called()


@mock.patch("molpretrain.molpretrain.init_sentry")
def test_sentry_not_enabled_without_dsn(m_init_sentry, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    molpretrain.main(["synth", "--out", "corpus.smi"], is_development=False)

    m_init_sentry.assert_not_called()


@mock.patch("molpretrain.molpretrain.init_sentry")
def test_sentry_enabled(m_init_sentry, sentry_config):
    molpretrain.main(sentry_config, is_development=False)

    m_init_sentry.assert_called_once_with(DSN)


@pytest.mark.parametrize(
    "error",
    (
        CheckpointError("bad file"),
        ShapeError("mismatch"),
        KeyboardInterrupt(),
        BrokenPipeError(),
        MemoryError(),
    ),
)
@mock.patch("molpretrain.sentry.sentry_sdk.capture_exception")
def test_expected_errors_are_not_reported(m_capture, error):
    report_to_sentry(error)
    m_capture.assert_not_called()


@mock.patch("molpretrain.sentry.sentry_sdk.capture_exception")
def test_crashes_are_reported(m_capture):
    error = ZeroDivisionError("division by zero")
    report_to_sentry(error)
    m_capture.assert_called_once_with(error)
