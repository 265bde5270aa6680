# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import platform

import numpy as np

from molpretrain.environment import MOLPRETRAIN_NAME, MOLPRETRAIN_VERSION
from molpretrain.logger import logger


def log_current_version(_args, _config):
    py_version = platform.python_version()
    system = platform.system()

    logger.info(
        f"{MOLPRETRAIN_NAME} {MOLPRETRAIN_VERSION} "
        f"(Python {py_version}, numpy {np.__version__}, {system})"
    )


def add_parser(parser):
    ver_parser = parser.add_parser("version", help="Get version number.")
    ver_parser.set_defaults(func=log_current_version)
