# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Crash reporting, enabled by ``[error_reporting] dsn``."""

import logging

import numpy as np
import sentry_sdk
from sentry_sdk.integrations.logging import LoggingIntegration

from .environment import MOLPRETRAIN_VERSION
from .exceptions import Error

NOT_REPORTED = (
    # raised on purpose, with a message for the user
    Error,
    # Ctrl-C and closed pipes
    KeyboardInterrupt,
    BrokenPipeError,
    # oversized model configurations
    MemoryError,
)


def init_sentry(dsn: str):
    sentry_sdk.init(
        dsn=dsn,
        # bad input is answered with logger.error(); only crashes become events
        integrations=[LoggingIntegration(level=logging.INFO, event_level=None)],
        release=MOLPRETRAIN_VERSION,
    )
    sentry_sdk.set_tag("numpy", np.__version__)


def report_to_sentry(e: BaseException):
    if isinstance(e, NOT_REPORTED):
        return
    sentry_sdk.capture_exception(e)
