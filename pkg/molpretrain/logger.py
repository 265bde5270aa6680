# coding=utf-8
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import logging
import logging.handlers
import os
import sys
from typing import Mapping

import numpy as np
from colorama import just_fix_windows_console

from molpretrain import environment

logger = logging.getLogger("mol-pretrain")

LOG_FILENAME = "mol-pretrain.log"
LOG_MAX_SIZE = 1024 * 1024 * 50
LOG_BACKUPS = 5

# numpy conditions sent to the run log; underflow is routine in exp()
NUMPY_FLAGS = {"over": "call", "divide": "call", "invalid": "call", "under": "ignore"}

_handlers = []
_numpy_state = []


class ColourFormatter(logging.Formatter):
    """Plain messages on the console, coloured by level when ANSI is available."""

    COLOURS = {"WARNING": 33, "ERROR": 31}  # yellow, red

    def __init__(self):
        if environment.DEBUG:
            fmt = "%(levelname)-8s %(asctime)-13s %(message)s"
        else:
            fmt = "%(message)s"
        super().__init__(fmt)
        # wrap stdout and stderr, so that color codes work in the windows console
        just_fix_windows_console()

    def format(self, record: logging.LogRecord) -> str:
        result = super().format(record)
        colour = self.COLOURS.get(record.levelname)
        if colour and environment.HAS_ANSI:
            result = f"\033[{colour}m{result}\033[0m"
        return result


def _log_numpy_error(kind: str, flag: int):
    logger.debug("numpy floating point error: %s (flag %s)", kind, flag)


def format_metrics(metrics: Mapping[str, float], digits: int = 4) -> str:
    """``name value`` pairs in a stable order, e.g. ``auc_roc 0.9120, f1 0.8000``."""
    return ", ".join(f"{name} {value:.{digits}f}" for name, value in metrics.items())


def init_logging():
    """Log to the console and to a rotating run log in the state directory."""
    os.makedirs(environment.STATE_PATH, exist_ok=True)

    console = logging.StreamHandler(sys.stdout)
    console.setFormatter(ColourFormatter())
    console.setLevel(logging.DEBUG if environment.DEBUG else logging.INFO)

    run_log = logging.handlers.RotatingFileHandler(
        filename=os.path.join(environment.STATE_PATH, LOG_FILENAME),
        maxBytes=LOG_MAX_SIZE,
        backupCount=LOG_BACKUPS,
        encoding="utf8",
    )
    run_log.setFormatter(
        logging.Formatter("%(asctime)-13s %(levelname)-8s %(message)s")
    )
    run_log.setLevel(logging.DEBUG)

    for handler in (console, run_log):
        logger.addHandler(handler)
        _handlers.append(handler)
    logger.setLevel(logging.DEBUG)

    _numpy_state.append((np.seterr(**NUMPY_FLAGS), np.seterrcall(_log_numpy_error)))


def stop_logging():
    """Remove our logging handlers and close files."""
    for handler in _handlers:
        logger.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()
    _handlers.clear()

    while _numpy_state:
        flags, callback = _numpy_state.pop()
        np.seterr(**flags)
        np.seterrcall(callback)
